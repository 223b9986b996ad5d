// One shared color scale for both colorize modes: importance fractions and
// runtime fractions both live in [0, 1], so comparing colors across modes
// is meaningful.

const KIND_FILL: Record<string, string> = {
  operator: "#dbe7f5",
  table: "#e4f0e2",
  column: "#f3ead9",
  predicate: "#efe1ee",
};

export function kindFill(kind: string): string {
  return KIND_FILL[kind] ?? "#eeeeee";
}

/** White -> warm red ramp over [0, 1]. */
export function fractionFill(fraction: number): string {
  const t = Math.max(0, Math.min(1, fraction));
  const r = 255;
  const g = Math.round(245 - 180 * t);
  const b = Math.round(240 - 200 * t);
  return `rgb(${r}, ${g}, ${b})`;
}

/** Neutral fill for nodes outside the active scale (no runtime to show). */
export const NEUTRAL_FILL = "#f0f0f0";
