/* tslint:disable */
/* eslint-disable */

/**
 * Consensus label and tier of two annotations given as JSON.
 */
export function consensus(request_json: string): string;

/**
 * Renders a slice as RGBA bytes for a canvas `ImageData`, preceded by the
 * width and height as two little-endian u32 values. Returns an empty array
 * on invalid input; call `explore_slice_error` for the message.
 */
export function explore_slice(request_json: string): Uint8Array;

/**
 * Why `explore_slice` returned nothing, or an empty string.
 */
export function explore_slice_error(request_json: string): string;

/**
 * Weighted Cohen's kappa of two rating lists given as JSON.
 */
export function kappa(request_json: string): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly consensus: (a: number, b: number) => [number, number];
    readonly explore_slice: (a: number, b: number) => [number, number];
    readonly explore_slice_error: (a: number, b: number) => [number, number];
    readonly kappa: (a: number, b: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
