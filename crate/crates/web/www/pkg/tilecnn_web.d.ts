/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Replaces the mixture. Returns the realized share of second-class tiles.
     * Changing the fixture kind discards the trained model.
     */
    generate(kind: string, fraction: number, noise: number, seed: number): number;
    has_model(): boolean;
    /**
     * Second-class probability per tile, dark blue (0) to yellow (1).
     */
    heatmap_rgba(): Uint8Array;
    height(): number;
    /**
     * Starts with a half-and-half color mixture and no model.
     */
    constructor();
    /**
     * The mixture with tiles at or above `tau` tinted red.
     */
    overlay_rgba(tau: number, alpha: number): Uint8Array;
    /**
     * Share of tiles whose second-class probability is at least `tau`.
     */
    predicted_fraction(tau: number): number;
    /**
     * The mixture itself.
     */
    source_rgba(): Uint8Array;
    /**
     * Trains on fresh source pairs of the current kind (seeds disjoint from
     * any mixture) and predicts the current mixture. Several small pairs are
     * used because each texture seed fixes a single fiber orientation.
     * Returns the final epoch's training accuracy.
     */
    train(epochs: number, seed: number): number;
    /**
     * Share of mixture tiles drawn from the second class.
     */
    true_fraction(): number;
    width(): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_generate: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly demo_has_model: (a: number) => number;
    readonly demo_heatmap_rgba: (a: number) => [number, number, number, number];
    readonly demo_height: (a: number) => number;
    readonly demo_new: () => [number, number, number];
    readonly demo_overlay_rgba: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_predicted_fraction: (a: number, b: number) => [number, number, number];
    readonly demo_source_rgba: (a: number) => [number, number];
    readonly demo_train: (a: number, b: number, c: number) => [number, number, number];
    readonly demo_true_fraction: (a: number) => number;
    readonly demo_width: (a: number) => number;
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
