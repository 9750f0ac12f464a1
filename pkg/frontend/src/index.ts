export { make, EnvHandle, CoreError } from "./handle.js";
export type {
  BuildingSpace,
  SpaceInfo,
  StepInfo,
  StepResult,
  MakeOptions,
} from "./handle.js";
