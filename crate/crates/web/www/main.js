import init, { Model, evolution, steadyPopulation, spectrum } from "./pkg/heom_qubit_web.js";

const COLORS = { full: "#1f77b4", rwa: "#d62728", markov: "#2ca02c" };

const num = (id) => Number(document.getElementById(id).value);

function model() {
  return new Model(num("delta_f"), num("gamma_f"), num("delta_b"), num("gamma_b"));
}

function treatments(section) {
  return [...document.querySelectorAll(`#${section} input[name=treatment]:checked`)].map((el) => el.value);
}

function status(id, text, error = false) {
  const el = document.getElementById(id);
  el.textContent = text;
  el.classList.toggle("error", error);
}

// give the browser a chance to paint status text before a long call
const yieldToBrowser = () => new Promise((resolve) => setTimeout(resolve, 0));

function niceTicks(lo, hi, count = 5) {
  const span = hi - lo || 1;
  const raw = span / count;
  const mag = 10 ** Math.floor(Math.log10(raw));
  const step = [1, 2, 5, 10].map((m) => m * mag).find((s) => s >= raw);
  const ticks = [];
  for (let t = Math.ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step) ticks.push(+t.toPrecision(12));
  return ticks;
}

function plot(canvasId, series, xlabel, ylabel) {
  const canvas = document.getElementById(canvasId);
  const dpr = window.devicePixelRatio || 1;
  canvas.width = canvas.clientWidth * dpr;
  canvas.height = canvas.clientHeight * dpr;
  const ctx = canvas.getContext("2d");
  ctx.scale(dpr, dpr);
  const w = canvas.clientWidth, h = canvas.clientHeight;
  const pad = { l: 60, r: 15, t: 15, b: 40 };
  ctx.clearRect(0, 0, w, h);

  const finite = (v) => Number.isFinite(v);
  const xs = series.flatMap((s) => s.x).filter(finite);
  const ys = series.flatMap((s) => s.y).filter(finite);
  if (xs.length === 0) return;
  let [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = [Math.min(0, ...ys), Math.max(...ys)];
  if (x0 === x1) x1 = x0 + 1;
  if (y0 === y1) y1 = y0 + 1;
  const px = (x) => pad.l + ((x - x0) / (x1 - x0)) * (w - pad.l - pad.r);
  const py = (y) => h - pad.b - ((y - y0) / (y1 - y0)) * (h - pad.t - pad.b);

  ctx.strokeStyle = "#999";
  ctx.fillStyle = "#333";
  ctx.font = "12px system-ui, sans-serif";
  ctx.beginPath();
  ctx.moveTo(pad.l, pad.t);
  ctx.lineTo(pad.l, h - pad.b);
  ctx.lineTo(w - pad.r, h - pad.b);
  ctx.stroke();
  ctx.textAlign = "center";
  for (const t of niceTicks(x0, x1)) {
    ctx.fillText(String(t), px(t), h - pad.b + 15);
  }
  ctx.fillText(xlabel, (pad.l + w - pad.r) / 2, h - 6);
  ctx.textAlign = "right";
  for (const t of niceTicks(y0, y1)) {
    ctx.fillText(String(t), pad.l - 6, py(t) + 4);
  }
  ctx.save();
  ctx.translate(14, (pad.t + h - pad.b) / 2);
  ctx.rotate(-Math.PI / 2);
  ctx.textAlign = "center";
  ctx.fillText(ylabel, 0, 0);
  ctx.restore();

  series.forEach((s, k) => {
    ctx.strokeStyle = s.color;
    ctx.fillStyle = s.color;
    ctx.lineWidth = 1.6;
    ctx.beginPath();
    let pen = false;
    s.x.forEach((x, i) => {
      const y = s.y[i];
      if (!finite(y)) {
        pen = false;
        return;
      }
      if (pen) ctx.lineTo(px(x), py(y));
      else ctx.moveTo(px(x), py(y));
      pen = true;
    });
    ctx.stroke();
    if (s.markers) {
      s.x.forEach((x, i) => {
        if (finite(s.y[i])) ctx.fillRect(px(x) - 2.5, py(s.y[i]) - 2.5, 5, 5);
      });
    }
    ctx.textAlign = "left";
    ctx.fillText(s.label, w - pad.r - 70, pad.t + 14 * (k + 1));
  });
}

async function runEvolution() {
  const chosen = treatments("evolution");
  const series = [];
  for (const t of chosen) {
    status("ev_status", `computing ${t}…`);
    await yieldToBrowser();
    const start = performance.now();
    const flat = evolution(model(), t, num("ev_t_end"), 0.1, num("depth"));
    const x = [], y = [];
    for (let i = 0; i < flat.length; i += 4) {
      x.push(flat[i]);
      y.push(flat[i + 1]);
    }
    series.push({ label: t, color: COLORS[t], x, y });
    plot("ev_plot", series, "t", "excited population");
    status("ev_status", `${t} done in ${((performance.now() - start) / 1000).toFixed(1)} s`);
  }
}

async function runSweep() {
  const param = document.getElementById("sw_param").value;
  const values = document.getElementById("sw_values").value.split(",").map(Number).filter(Number.isFinite);
  const chosen = treatments("sweep");
  const series = chosen.map((t) => ({ label: t, color: COLORS[t], x: values, y: values.map(() => NaN), markers: true }));
  const failures = [];
  for (const [k, t] of chosen.entries()) {
    for (const [i, v] of values.entries()) {
      status("sw_status", `${t}: ${param} = ${v} (${i + 1}/${values.length})…`);
      await yieldToBrowser();
      const m = model();
      m[param] = v;
      try {
        series[k].y[i] = steadyPopulation(m, t, num("depth"));
      } catch (e) {
        failures.push(`${t} at ${v}: ${e.message ?? e}`);
      }
      plot("sw_plot", series, param, "steady excited population");
    }
  }
  if (failures.length) status("sw_status", failures.join("; "), true);
  else status("sw_status", "done");
}

async function runSpectrum() {
  const chosen = treatments("spectrum");
  const series = [];
  for (const t of chosen) {
    status("sp_status", `computing ${t}…`);
    await yieldToBrowser();
    const flat = spectrum(model(), t, num("sp_tmax"), num("sp_tn"), num("sp_wmin"), num("sp_wmax"), num("sp_wn"), num("depth"));
    const x = [], y = [];
    for (let i = 0; i < flat.length; i += 2) {
      x.push(flat[i]);
      y.push(flat[i + 1]);
    }
    series.push({ label: t, color: COLORS[t], x, y });
    plot("sp_plot", series, "ω", "normalized intensity");
  }
  status("sp_status", "done");
}

function guard(statusId, run) {
  return async () => {
    try {
      await run();
    } catch (e) {
      status(statusId, e.message ?? String(e), true);
    }
  };
}

await init();
document.getElementById("ev_run").addEventListener("click", guard("ev_status", runEvolution));
document.getElementById("sw_run").addEventListener("click", guard("sw_status", runSweep));
document.getElementById("sp_run").addEventListener("click", guard("sp_status", runSpectrum));
guard("ev_status", runEvolution)();
