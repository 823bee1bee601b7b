/** Printable name for a hex-encoded wire identifier ("6b65..." → "kettle01"). */
export function wireIdToText(hex: string): string {
  if (!/^([0-9a-fA-F]{2})+$/.test(hex)) return hex;
  let out = "";
  for (let i = 0; i < hex.length; i += 2) {
    const byte = parseInt(hex.slice(i, i + 2), 16);
    if (byte === 0) break; // names are NUL-padded to 8 bytes
    out += byte >= 0x20 && byte < 0x7f ? String.fromCharCode(byte) : ".";
  }
  return out || hex;
}

export function formatWatts(p: number): string {
  if (Math.abs(p) >= 1000) return `${(p / 1000).toFixed(2)} kW`;
  return `${p.toFixed(1)} W`;
}

export function formatAgo(ms: number, nowMs: number): string {
  const delta = Math.max(0, nowMs - ms);
  if (delta < 2_000) return "just now";
  if (delta < 120_000) return `${Math.round(delta / 1000)}s ago`;
  return `${Math.round(delta / 60_000)}m ago`;
}
