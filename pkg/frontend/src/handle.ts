import { spawn, type ChildProcessWithoutNullStreams } from "node:child_process";
import { createInterface } from "node:readline";

/**
 * Client for the engine's line-JSON stdio protocol.
 *
 * `make()` spawns `gridflex serve <schema>` and returns a handle whose
 * reset/step exchange flat numeric arrays, one row per building (a single
 * row when the schema runs a central agent). Row order and width follow
 * `spaces()`. The wire encodes NaN as null in both directions; this module
 * converts so callers only ever see numbers.
 */

/** Engine-side failure. `name` carries the engine's exception class name. */
export class CoreError extends Error {
  constructor(name: string, message: string) {
    super(message);
    this.name = name;
  }
}

export interface BuildingSpace {
  name: string;
  observations: string[];
  actions: string[];
  action_low: number[];
  action_high: number[];
}

export interface SpaceInfo {
  engine_version: string;
  central_agent: boolean;
  episode_time_steps: number;
  seconds_per_time_step: number;
  buildings: BuildingSpace[];
}

export interface StepInfo {
  step: number;
  district_net_electricity: number;
  building_rewards: number[];
  /** (building name, action name) pairs the engine clipped into bounds. */
  clipped_actions: [string, string][];
}

export interface StepResult {
  observations: number[][];
  rewards: number[];
  terminated: boolean;
  info: StepInfo;
}

export interface MakeOptions {
  /** argv launching the engine; "serve <schema>" is appended. Default ["gridflex"], or $GRIDFLEX_COMMAND split on spaces. */
  launcher?: string[];
}

interface Pending {
  resolve: (value: unknown) => void;
  reject: (error: Error) => void;
}

interface WireResponse {
  ok: boolean;
  result?: unknown;
  error?: string;
  message?: string;
}

function toNumber(value: unknown): number {
  return value === null ? Number.NaN : (value as number);
}

function toVector(value: unknown): number[] {
  if (!Array.isArray(value)) {
    throw new Error("engine sent a non-array where a numeric vector was expected");
  }
  return value.map(toNumber);
}

function toMatrix(value: unknown): number[][] {
  if (!Array.isArray(value)) {
    throw new Error("engine sent a non-array where per-building rows were expected");
  }
  return value.map(toVector);
}

export class EnvHandle {
  readonly schemaPath: string;
  /** Seed given to make(); reset() reuses it unless overridden. */
  readonly seed: number;

  private readonly child: ChildProcessWithoutNullStreams;
  private readonly pending: Pending[] = [];
  private readonly stderrTail: string[] = [];
  private space: SpaceInfo | undefined;
  private closing = false;
  private exited = false;

  private constructor(schemaPath: string, seed: number, child: ChildProcessWithoutNullStreams) {
    this.schemaPath = schemaPath;
    this.seed = seed;
    this.child = child;
    createInterface({ input: child.stdout }).on("line", (line) => this.dispatch(line));
    child.stderr.on("data", (chunk: Buffer) => {
      this.stderrTail.push(chunk.toString());
      while (this.stderrTail.length > 20) this.stderrTail.shift();
    });
    child.on("error", (error) => this.failPending(new Error(`failed to launch engine: ${error.message}`)));
    child.on("exit", (code) => {
      this.exited = true;
      this.failPending(new Error(`engine exited with code ${code}${this.stderrText()}`));
    });
    // EPIPE on a dying engine surfaces through the exit handler instead
    child.stdin.on("error", () => undefined);
  }

  /** Spawn the engine and cache its space descriptors. */
  static async open(schemaPath: string, seed: number, options: MakeOptions = {}): Promise<EnvHandle> {
    const launcher =
      options.launcher ?? (process.env["GRIDFLEX_COMMAND"] ?? "gridflex").split(" ");
    const [command, ...prefix] = launcher;
    if (!command) throw new Error("launcher must name an executable");
    const child = spawn(command, [...prefix, "serve", schemaPath], {
      stdio: ["pipe", "pipe", "pipe"],
    });
    const handle = new EnvHandle(schemaPath, seed, child);
    handle.space = (await handle.request({ op: "spaces" })) as SpaceInfo;
    return handle;
  }

  /** Observation/action descriptors, cached at open(). */
  spaces(): SpaceInfo {
    if (!this.space) throw new Error("handle is not initialized");
    return this.space;
  }

  /** Start a fresh episode; returns one observation row per building. */
  async reset(seed: number = this.seed): Promise<number[][]> {
    const result = (await this.request({ op: "reset", seed })) as { observations: unknown };
    return toMatrix(result.observations);
  }

  /** Advance one time step. `actions` rows follow spaces() order; NaN on a
   *  device slot means "let the thermostat decide". */
  async step(actions: number[][]): Promise<StepResult> {
    const result = (await this.request({ op: "step", actions })) as {
      observations: unknown;
      rewards: unknown;
      terminated: boolean;
      info: Record<string, unknown>;
    };
    return {
      observations: toMatrix(result.observations),
      rewards: toVector(result.rewards),
      terminated: result.terminated,
      info: {
        step: result.info["step"] as number,
        district_net_electricity: toNumber(result.info["district_net_electricity"]),
        building_rewards: toVector(result.info["building_rewards"]),
        clipped_actions: result.info["clipped_actions"] as [string, string][],
      },
    };
  }

  /** Shut the engine down; the handle accepts no further calls. */
  async close(): Promise<void> {
    if (this.closing || this.exited) {
      this.closing = true;
      return;
    }
    const farewell = this.request({ op: "close" });
    this.closing = true;
    await farewell.catch(() => undefined);
    await this.waitForExit(2000);
  }

  private request(payload: Record<string, unknown>): Promise<unknown> {
    if (this.closing) return Promise.reject(new Error("handle is closed"));
    if (this.exited) {
      return Promise.reject(new Error(`engine is not running${this.stderrText()}`));
    }
    return new Promise((resolve, reject) => {
      this.pending.push({ resolve, reject });
      // JSON.stringify writes NaN action entries as null, which the engine reads back as NaN
      this.child.stdin.write(JSON.stringify(payload) + "\n");
    });
  }

  private dispatch(line: string): void {
    const waiter = this.pending.shift();
    if (!waiter) return;
    let response: WireResponse;
    try {
      response = JSON.parse(line) as WireResponse;
    } catch {
      waiter.reject(new Error(`engine sent a non-JSON line: ${line}`));
      return;
    }
    if (response.ok) {
      waiter.resolve(response.result);
    } else {
      waiter.reject(new CoreError(response.error ?? "EngineError", response.message ?? ""));
    }
  }

  private failPending(error: Error): void {
    let waiter: Pending | undefined;
    while ((waiter = this.pending.shift())) waiter.reject(error);
  }

  private stderrText(): string {
    const text = this.stderrTail.join("").trim();
    return text ? `\n${text}` : "";
  }

  private waitForExit(graceMs: number): Promise<void> {
    if (this.exited) return Promise.resolve();
    return new Promise((resolve) => {
      const deadline = setTimeout(() => {
        this.child.kill("SIGKILL");
        resolve();
      }, graceMs);
      deadline.unref();
      this.child.once("exit", () => {
        clearTimeout(deadline);
        resolve();
      });
    });
  }
}

/** Launch an engine for `schemaPath`; `seed` is the handle's default episode seed. */
export function make(schemaPath: string, seed: number, options: MakeOptions = {}): Promise<EnvHandle> {
  return EnvHandle.open(schemaPath, seed, options);
}
