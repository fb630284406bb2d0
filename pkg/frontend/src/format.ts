/**
 * Display formatting for derived values.
 *
 * The panel must show exactly what the backend computed, so numbers are
 * rendered with the shortest decimal string that parses back to the same
 * float64 (which is what String() gives in JS). Nothing is rounded for
 * display; a reader can paste a shown value into the CLI and get the same
 * bits.
 */

import type { JsonValue } from "./api.js";

export function formatNumber(n: number): string {
  // String(-0) is "0", which would parse back to +0
  if (Object.is(n, -0)) return "-0";
  return String(n);
}

export function formatValue(value: JsonValue): string {
  if (typeof value === "number") return formatNumber(value);
  if (typeof value === "string") return value;
  if (typeof value === "boolean") return value ? "true" : "false";
  if (value === null) return "null";
  if (Array.isArray(value)) return value.map(formatValue).join(", ");
  return Object.entries(value)
    .map(([k, v]) => `${k}=${formatValue(v)}`)
    .join("  ");
}

export interface DerivedRow {
  key: string;
  text: string;
}

export function derivedRows(derived: Record<string, JsonValue>): DerivedRow[] {
  return Object.keys(derived)
    .sort()
    .map((key) => ({ key, text: formatValue(derived[key] as JsonValue) }));
}

export interface NumericLeaf {
  path: string;
  value: number;
}

/** Every number reachable in a JSON value, with a dotted path for reporting. */
export function numericLeaves(value: JsonValue, path = ""): NumericLeaf[] {
  if (typeof value === "number") return [{ path, value }];
  if (Array.isArray(value)) {
    return value.flatMap((v, i) => numericLeaves(v, path ? `${path}.${i}` : String(i)));
  }
  if (value !== null && typeof value === "object") {
    return Object.entries(value).flatMap(([k, v]) =>
      numericLeaves(v, path ? `${path}.${k}` : k),
    );
  }
  return [];
}
