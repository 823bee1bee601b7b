// JSON shapes of the coordinator API. Field names match the wire exactly;
// the dashboard never recomputes electrical quantities from other fields.

export interface ApiReading {
  seq: number;
  timestamp_ms: number;
  v_rms: number;
  i_rms: number;
  phi: number;
  p: number;
  q: number;
  s: number;
  energy_j: number;
  relay_closed: boolean;
  sleeping: boolean;
}

export interface MeterSummary {
  storage_id: string;
  /** Hex-encoded 8-byte wire identifier. */
  wire_id: string;
  last_seen_ms: number;
  live: boolean;
  stored: number;
  gap_events: number;
  last_reading: ApiReading | null;
}

export type TicketState = "pending" | "acked" | "failed";

export interface Ticket {
  command_id: number;
  meter: string;
  op: string;
  arg: number | null;
  state: TicketState;
  attempts: number;
  created_ms: number;
  resolved_ms: number | null;
}

export interface ReadingsPage {
  readings: ApiReading[];
  next: number | null;
}

export interface Health {
  accepted: number;
  stored: number;
  duplicates: number;
  gap_events: number;
  dropped: Record<string, number>;
  meters: number;
  [key: string]: unknown;
}

export type CommandOp = "switch_on" | "switch_off" | "sleep" | "wake" | "set_fs";
