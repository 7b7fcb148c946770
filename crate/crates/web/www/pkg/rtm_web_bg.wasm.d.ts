/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_network_free: (a: number, b: number) => void;
export const link_curve: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const network_fit: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
export const network_fitted_share: (a: number) => [number, number];
export const network_links: (a: number) => [number, number];
export const network_new: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
export const network_num_docs: (a: number) => number;
export const network_suggest: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const network_topic_words: (a: number, b: number, c: number) => [number, number];
export const network_true_share: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
