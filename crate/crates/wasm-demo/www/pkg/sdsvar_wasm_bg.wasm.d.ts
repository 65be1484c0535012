/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_tracking_free: (a: number, b: number) => void;
export const density: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const shape_moments: (a: number, b: number) => [number, number];
export const tracking_filtered: (a: number, b: number) => [number, number];
export const tracking_labels: (a: number) => [number, number];
export const tracking_loglik: (a: number) => number;
export const tracking_new: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const tracking_observed: (a: number, b: number) => [number, number];
export const tracking_responses: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const tracking_start: (a: number) => number;
export const tracking_truth: (a: number, b: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_drop_slice: (a: number, b: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
