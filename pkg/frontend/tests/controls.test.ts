import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { checkSamplingInput, CommandDesk } from "../src/controls.js";
import { emptyFleet, fleetFetch, type RecordedCall } from "./fakes.js";

describe("checkSamplingInput", () => {
  it.each(["", "   "])("rejects blank input %j", (raw) => {
    const res = checkSamplingInput(raw);
    expect(res.ok).toBe(false);
  });

  it("rejects non-numeric input by name", () => {
    const res = checkSamplingInput("fast");
    expect(res).toEqual({ ok: false, message: '"fast" is not a number' });
  });

  it.each(["50", "99", "99.9"])("blocks %s Hz with a Nyquist explanation", (raw) => {
    const res = checkSamplingInput(raw);
    expect(res.ok).toBe(false);
    if (!res.ok) {
      expect(res.message).toContain("100 Hz");
      expect(res.message).toContain("Nyquist");
      expect(res.message).toContain("not sent");
    }
  });

  it("accepts the floor exactly and normal values", () => {
    expect(checkSamplingInput("100")).toEqual({ ok: true, hz: 100 });
    expect(checkSamplingInput("250")).toEqual({ ok: true, hz: 250 });
    expect(checkSamplingInput(" 1000 ")).toEqual({ ok: true, hz: 1000 });
  });

  it("blocks values above the meter ceiling", () => {
    const res = checkSamplingInput("20000");
    expect(res.ok).toBe(false);
    if (!res.ok) expect(res.message).toContain("10000 Hz");
  });
});

function makeDesk(calls: RecordedCall[] = []) {
  const state = emptyFleet();
  const client = new ApiClient("", fleetFetch(state, calls));
  return { state, desk: new CommandDesk(client), calls };
}

describe("CommandDesk", () => {
  it("issues one ticket per click and reports it pending", async () => {
    const { desk, calls } = makeDesk();
    const ticket = await desk.issue("m001", "switch_off");
    expect(ticket?.state).toBe("pending");
    expect(desk.busy("relay")).toBe(true);
    expect(calls).toHaveLength(1);
    expect(desk.recent[0]).toBe(ticket);
  });

  it("swallows a double click: one request, second issue returns null", async () => {
    const { desk, calls } = makeDesk();
    const [first, second] = await Promise.all([
      desk.issue("m001", "switch_off"),
      desk.issue("m001", "switch_on"), // same control group, still in flight
    ]);
    expect(first).not.toBeNull();
    expect(second).toBeNull();
    expect(calls.filter((c) => c.method === "POST")).toHaveLength(1);
  });

  it("lets independent control groups run concurrently", async () => {
    const { desk, calls } = makeDesk();
    await desk.issue("m001", "switch_off");
    await desk.issue("m001", "sleep");
    expect(calls.filter((c) => c.method === "POST")).toHaveLength(2);
    expect(desk.busy("relay")).toBe(true);
    expect(desk.busy("mode")).toBe(true);
    expect(desk.busy("sampling")).toBe(false);
  });

  it("releases the group when the ticket reaches a terminal state", async () => {
    const { state, desk } = makeDesk();
    const ticket = await desk.issue("m001", "switch_off");
    state.tickets.get(ticket!.command_id)!.state = "acked";

    await desk.pollPending();

    expect(desk.busy("relay")).toBe(false);
    expect(desk.recent[0].state).toBe("acked");
  });

  it("keeps the lock while the ticket is still pending", async () => {
    const { desk } = makeDesk();
    await desk.issue("m001", "wake");
    await desk.pollPending();
    expect(desk.busy("mode")).toBe(true);
  });

  it("shows a failed ticket and frees the control", async () => {
    const { state, desk } = makeDesk();
    const ticket = await desk.issue("m001", "set_fs", 250);
    state.tickets.get(ticket!.command_id)!.state = "failed";
    state.tickets.get(ticket!.command_id)!.attempts = 3;

    await desk.pollPending();

    expect(desk.busy("sampling")).toBe(false);
    expect(desk.recent[0]).toMatchObject({ state: "failed", attempts: 3 });
  });

  it("surfaces a rejection message and releases the group", async () => {
    const { desk, calls } = makeDesk();
    // The fake coordinator 422s sub-floor values, like the real one.
    const ticket = await desk.issue("m001", "set_fs", 50);
    expect(ticket).toBeNull();
    expect(desk.lastError).toContain("100 Hz floor");
    expect(desk.busy("sampling")).toBe(false);
    expect(calls.filter((c) => c.method === "POST")).toHaveLength(1);
  });

  it("bounds the recent-ticket log", async () => {
    const { state, desk } = makeDesk();
    for (let i = 0; i < 9; i++) {
      const t = await desk.issue("m001", i % 2 ? "switch_on" : "switch_off");
      state.tickets.get(t!.command_id)!.state = "acked";
      await desk.pollPending();
    }
    expect(desk.recent.length).toBeLessThanOrEqual(6);
    expect(desk.recent[0].command_id).toBe(9);
  });
});
