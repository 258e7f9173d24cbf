/* tslint:disable */
/* eslint-disable */

/**
 * Field and bath strengths; all three field processes share `delta_f` and
 * `gamma_f`.
 */
export class Model {
    free(): void;
    [Symbol.dispose](): void;
    constructor(delta_f: number, gamma_f: number, delta_b: number, gamma_b: number);
    delta_b: number;
    delta_f: number;
    gamma_b: number;
    gamma_f: number;
}

export function evolution(model: Model, treatment: string, t_end: number, stride: number, depth: number): Float64Array;

export function spectrum(model: Model, treatment: string, tau_max: number, tau_points: number, omega_min: number, omega_max: number, omega_points: number, depth: number): Float64Array;

export function steadyPopulation(model: Model, treatment: string, depth: number): number;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_get_model_delta_b: (a: number) => number;
    readonly __wbg_get_model_delta_f: (a: number) => number;
    readonly __wbg_get_model_gamma_b: (a: number) => number;
    readonly __wbg_get_model_gamma_f: (a: number) => number;
    readonly __wbg_model_free: (a: number, b: number) => void;
    readonly __wbg_set_model_delta_b: (a: number, b: number) => void;
    readonly __wbg_set_model_delta_f: (a: number, b: number) => void;
    readonly __wbg_set_model_gamma_b: (a: number, b: number) => void;
    readonly __wbg_set_model_gamma_f: (a: number, b: number) => void;
    readonly evolution: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly model_new: (a: number, b: number, c: number, d: number) => number;
    readonly spectrum: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number, number, number];
    readonly steadyPopulation: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
