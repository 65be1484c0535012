/* tslint:disable */
/* eslint-disable */

/**
 * A simulated sample with its true and filtered parameter paths.
 */
export class Tracking {
    free(): void;
    [Symbol.dispose](): void;
    filtered(k: number): Float64Array;
    labels(): string[];
    loglik(): number;
    constructor(process: string, t_len: number, seed: number, alpha_scale: number);
    observed(i: number): Float64Array;
    /**
     * Responses to shock `shock` at the end of the sample, returned as
     * `[mean | half-width | constant-θ]`, each block flat `[i][k]`.
     */
    responses(shock: number, horizon: number, draws: number, seed: number): Float64Array;
    /**
     * Index of the first filtered observation.
     */
    start(): number;
    truth(k: number): Float64Array;
}

export function density(delta: number, nu: number, lo: number, hi: number, points: number): Float64Array;

/**
 * `[skewness, kurtosis]`; infinite where the moment does not exist.
 */
export function shape_moments(delta: number, nu: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_tracking_free: (a: number, b: number) => void;
    readonly density: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly shape_moments: (a: number, b: number) => [number, number];
    readonly tracking_filtered: (a: number, b: number) => [number, number];
    readonly tracking_labels: (a: number) => [number, number];
    readonly tracking_loglik: (a: number) => number;
    readonly tracking_new: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly tracking_observed: (a: number, b: number) => [number, number];
    readonly tracking_responses: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly tracking_start: (a: number) => number;
    readonly tracking_truth: (a: number, b: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_drop_slice: (a: number, b: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
