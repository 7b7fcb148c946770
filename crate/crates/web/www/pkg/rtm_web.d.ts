/* tslint:disable */
/* eslint-disable */

export class Network {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Fits a two-topic model and returns a one-line summary.
     */
    fit(link_fn: string, em_iters: number, seed: bigint): string;
    /**
     * Posterior share of fitted topic 0 per document; empty before a fit.
     */
    fitted_share(): Float64Array;
    /**
     * Flattened `(a, b)` pairs.
     */
    links(): Uint32Array;
    /**
     * Two block topics over 20 terms with exponential links.
     */
    constructor(num_docs: number, eta: number, nu: number, noise: number, seed: bigint);
    num_docs(): number;
    /**
     * Training documents most likely to link to a new document with the
     * given words, as flattened `(doc, probability)` pairs.
     */
    suggest(words: string, top_k: number): Float64Array;
    /**
     * Top words of a fitted topic, space separated.
     */
    topic_words(topic: number, n: number): string;
    /**
     * Share of topic 0 in each document's generating proportions.
     */
    true_share(): Float64Array;
}

export function link_curve(kind: string, eta: number, nu: number, points: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_network_free: (a: number, b: number) => void;
    readonly link_curve: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly network_fit: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
    readonly network_fitted_share: (a: number) => [number, number];
    readonly network_links: (a: number) => [number, number];
    readonly network_new: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
    readonly network_num_docs: (a: number) => number;
    readonly network_suggest: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly network_topic_words: (a: number, b: number, c: number) => [number, number];
    readonly network_true_share: (a: number) => [number, number];
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
