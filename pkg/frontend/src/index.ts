export type { BoundArray } from "./tensor.js";
export {
  BoundaryError,
  TensorFormatError,
  decodeTensor,
  elementCount,
  encodeTensor,
  readTensorFile,
  validateBound,
  writeTensorFile,
} from "./tensor.js";
export type { AttentionInputs } from "./bridge.js";
export {
  BridgeError,
  boundRefine,
  boundSelectTopAlpha,
  boundSolveOt,
  boundTransportFeatures,
} from "./bridge.js";
