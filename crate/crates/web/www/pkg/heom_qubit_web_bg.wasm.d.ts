/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_get_model_delta_b: (a: number) => number;
export const __wbg_get_model_delta_f: (a: number) => number;
export const __wbg_get_model_gamma_b: (a: number) => number;
export const __wbg_get_model_gamma_f: (a: number) => number;
export const __wbg_model_free: (a: number, b: number) => void;
export const __wbg_set_model_delta_b: (a: number, b: number) => void;
export const __wbg_set_model_delta_f: (a: number, b: number) => void;
export const __wbg_set_model_gamma_b: (a: number, b: number) => void;
export const __wbg_set_model_gamma_f: (a: number, b: number) => void;
export const evolution: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const model_new: (a: number, b: number, c: number, d: number) => number;
export const spectrum: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number, number, number];
export const steadyPopulation: (a: number, b: number, c: number, d: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
