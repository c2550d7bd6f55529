/* tslint:disable */
/* eslint-disable */

/**
 * Two point-mass targets at `[2, -1]` and `[1, 1]`, two survivors at `[1, 0]` and
 * `[2, 0]`, constant-velocity transition with unit noise. Returns how often the
 * backward sampler links `[2, -1]` to `[1, 0]`, against the exact `e / (1 + e)`.
 */
export function linking_frequencies(draws: number, seed: bigint): string;

/**
 * Runs the exhaustive discrete checks and returns one report per instance.
 */
export function oracle_reports(): string;

/**
 * Simulates the demo scenario, filters it, smooths it and scores both.
 */
export function track_scenario(seed: bigint, clutter_rate: number, detection_probability: number, particles: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly linking_frequencies: (a: number, b: bigint) => [number, number];
    readonly oracle_reports: () => [number, number];
    readonly track_scenario: (a: bigint, b: number, c: number, d: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
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
