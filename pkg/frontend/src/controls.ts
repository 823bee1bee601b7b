import { ApiClient, ApiError } from "./api.js";
import type { CommandOp, Ticket } from "./types.js";

/**
 * Controls sharing a lock: both relay buttons block each other while one
 * command is in flight, likewise sleep/wake; the sampling input stands
 * alone. One user action, one ticket — a double click gets a no-op.
 */
export type ControlGroup = "relay" | "mode" | "sampling";

export const GROUP_OF: Record<CommandOp, ControlGroup> = {
  switch_on: "relay",
  switch_off: "relay",
  sleep: "mode",
  wake: "mode",
  set_fs: "sampling",
};

export const SAMPLING_FLOOR_HZ = 100;
export const SAMPLING_CEILING_HZ = 10_000;

export type SamplingCheck =
  | { ok: true; hz: number }
  | { ok: false; message: string };

/**
 * Validate the sampling-frequency input before anything touches the
 * network. The floor mirrors the meter's own limit: readings of a 50 Hz
 * mains need at least 100 Hz to satisfy Nyquist.
 */
export function checkSamplingInput(raw: string): SamplingCheck {
  const text = raw.trim();
  if (text === "") return { ok: false, message: "enter a sampling frequency in Hz" };
  const hz = Number(text);
  if (!Number.isFinite(hz)) {
    return { ok: false, message: `"${text}" is not a number` };
  }
  if (hz < SAMPLING_FLOOR_HZ) {
    return {
      ok: false,
      message:
        `${hz} Hz is below the ${SAMPLING_FLOOR_HZ} Hz Nyquist floor ` +
        `for 50 Hz mains — not sent`,
    };
  }
  if (hz > SAMPLING_CEILING_HZ) {
    return {
      ok: false,
      message: `${hz} Hz exceeds the ${SAMPLING_CEILING_HZ} Hz meter ceiling — not sent`,
    };
  }
  return { ok: true, hz };
}

/**
 * Issues commands and follows their tickets to a terminal state. While a
 * ticket from a control group is pending, that group is busy and further
 * clicks are ignored.
 */
export class CommandDesk {
  readonly recent: Ticket[] = [];
  lastError: string | null = null;

  private pending = new Map<ControlGroup, Ticket>();

  constructor(private readonly client: ApiClient, private readonly keep = 6) {}

  busy(group: ControlGroup): boolean {
    return this.pending.has(group);
  }

  pendingTicket(group: ControlGroup): Ticket | null {
    return this.pending.get(group) ?? null;
  }

  /** Returns the new ticket, or null if the group was busy or the API refused. */
  async issue(meterId: string, op: CommandOp, arg?: number): Promise<Ticket | null> {
    const group = GROUP_OF[op];
    if (this.busy(group)) return null;
    this.lastError = null;
    // Reserve the group before the request resolves so a second click
    // during the round trip can't raise a second ticket.
    const placeholder: Ticket = {
      command_id: -1,
      meter: meterId,
      op,
      arg: arg ?? null,
      state: "pending",
      attempts: 0,
      created_ms: Date.now(),
      resolved_ms: null,
    };
    this.pending.set(group, placeholder);
    try {
      const ticket = await this.client.command(meterId, op, arg);
      this.pending.set(group, ticket);
      this.remember(ticket);
      return ticket;
    } catch (err) {
      this.pending.delete(group);
      this.lastError = err instanceof ApiError ? err.message : "coordinator unreachable";
      return null;
    }
  }

  /** Poll every pending ticket once; release groups that reached a terminal state. */
  async pollPending(): Promise<void> {
    for (const [group, ticket] of [...this.pending]) {
      if (ticket.command_id < 0) continue; // still waiting for the POST
      try {
        const fresh = await this.client.ticket(ticket.command_id);
        this.remember(fresh);
        if (fresh.state === "pending") {
          this.pending.set(group, fresh);
        } else {
          this.pending.delete(group);
        }
      } catch {
        // Keep the lock; the next poll retries. Tickets are server-side
        // state, they don't evaporate on one lost poll.
      }
    }
  }

  private remember(ticket: Ticket): void {
    const at = this.recent.findIndex((t) => t.command_id === ticket.command_id);
    if (at >= 0) {
      this.recent[at] = ticket;
    } else {
      this.recent.unshift(ticket);
      if (this.recent.length > this.keep) this.recent.pop();
    }
  }
}
