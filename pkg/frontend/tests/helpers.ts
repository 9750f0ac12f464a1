import path from "node:path";
import { fileURLToPath } from "node:url";

import { make, type EnvHandle, type MakeOptions } from "../src/index.js";

const here = path.dirname(fileURLToPath(import.meta.url));

/** The 24-step two-building district bundled with the engine's test data. */
export const SCHEMA = path.resolve(here, "../../tests/data/district_24step/schema.json");

export function openFixture(seed: number, options?: MakeOptions): Promise<EnvHandle> {
  return make(SCHEMA, seed, options);
}

/** Zero vector per building, matching the fixture's action arity. */
export const ZERO_ACTIONS: number[][] = [[], [0, 0, 0, 0]];
