/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const linking_frequencies: (a: number, b: bigint) => [number, number];
export const oracle_reports: () => [number, number];
export const track_scenario: (a: bigint, b: number, c: number, d: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
