export { parseCsv, column, hasColumn, uniqueSorted, SchemaMismatchError,
  EmptyInputError, SUPPORTED_SCHEMA } from "./csv.js";
export type { ParsedCsv } from "./csv.js";
export { leastSquares, logLogSlope } from "./fit.js";
export { render, renderProfiles, renderHeatmap, renderScaling, renderClausius,
  renderWeak } from "./figures.js";
export type { FigureKind, FigureResult, FigureOptions } from "./figures.js";
export { colormap } from "./colormap.js";
export { runCli } from "./cli.js";
