import { describe, expect, it, vi } from "vitest";

import { ServiceClient } from "../src/api";
import { Session } from "../src/state";

// eslint-disable-next-line @typescript-eslint/no-explicit-any
function clientWith(enhance: any): ServiceClient {
  const client = new ServiceClient("http://svc");
  (client as unknown as { enhance: typeof enhance }).enhance = enhance;
  return client;
}

function deferred<T>() {
  let resolve!: (value: T) => void;
  const promise = new Promise<T>((r) => (resolve = r));
  return { promise, resolve };
}

const someLow = new Blob([new Uint8Array([1, 2, 3])]);

describe("Session", () => {
  it("requires an upload before enhancing", async () => {
    const enhance = vi.fn();
    const session = new Session(clientWith(enhance));
    await session.requestEnhance({ refId: "a" }, "a", null);
    expect(enhance).not.toHaveBeenCalled();
    expect(session.lastError).toMatch(/upload/);
  });

  it("a second upload replaces the first", () => {
    const session = new Session(clientWith(vi.fn()));
    session.setLow("first.png", someLow);
    const second = new Blob([new Uint8Array([9])]);
    session.setLow("second.png", second);
    expect(session.low?.name).toBe("second.png");
    expect(session.low?.blob).toBe(second);
  });

  it("keeps exactly one request in flight and coalesces rapid clicks", async () => {
    const gate = deferred<{ bytes: ArrayBuffer; meanV: number }>();
    const calls: string[] = [];
    const enhance = vi.fn(async (_low: Blob, ref: { refId: string }) => {
      calls.push(ref.refId);
      if (calls.length === 1) return gate.promise;
      return { bytes: new ArrayBuffer(1), meanV: 0.5 };
    });
    const session = new Session(clientWith(enhance));
    session.setLow("x.png", someLow);

    const first = session.requestEnhance({ refId: "a" }, "a", null);
    const second = session.requestEnhance({ refId: "b" }, "b", null);
    const third = session.requestEnhance({ refId: "c" }, "c", null);
    expect(calls).toEqual(["a"]); // b/c waited while a is in flight
    gate.resolve({ bytes: new ArrayBuffer(1), meanV: 0.1 });
    await Promise.all([first, second, third]);
    // the queue holds one slot: c replaced b
    expect(calls).toEqual(["a", "c"]);
  });

  it("orders results by mean V ascending regardless of click order", async () => {
    let v = 0;
    const values = [0.9, 0.2, 0.5];
    const enhance = vi.fn(async () => ({ bytes: new ArrayBuffer(1), meanV: values[v++] }));
    const session = new Session(clientWith(enhance));
    session.setLow("x.png", someLow);
    await session.requestEnhance({ refId: "bright" }, "bright", null);
    await session.requestEnhance({ refId: "dark" }, "dark", null);
    await session.requestEnhance({ refId: "mid" }, "mid", null);
    expect(session.orderedResults().map((r) => r.key)).toEqual(["dark", "mid", "bright"]);
  });

  it("re-clicking a reference replaces its card instead of duplicating", async () => {
    const enhance = vi.fn(async () => ({ bytes: new ArrayBuffer(1), meanV: 0.4 }));
    const session = new Session(clientWith(enhance));
    session.setLow("x.png", someLow);
    await session.requestEnhance({ refId: "a" }, "a", null);
    await session.requestEnhance({ refId: "a" }, "a", null);
    expect(session.results).toHaveLength(1);
  });

  it("clear empties the strip", async () => {
    const enhance = vi.fn(async () => ({ bytes: new ArrayBuffer(1), meanV: 0.4 }));
    const session = new Session(clientWith(enhance));
    session.setLow("x.png", someLow);
    await session.requestEnhance({ refId: "a" }, "a", null);
    session.clear();
    expect(session.results).toEqual([]);
  });

  it("marks the service down on network failure and surfaces API errors", async () => {
    const enhance = vi
      .fn()
      .mockRejectedValueOnce(new TypeError("fetch failed"))
      .mockRejectedValueOnce(Object.assign(new Error("unknown ref_id"), { name: "ApiError" }));
    const session = new Session(clientWith(enhance));
    session.setLow("x.png", someLow);
    await session.requestEnhance({ refId: "a" }, "a", null);
    expect(session.serviceDown).toBe(true);
    await session.requestEnhance({ refId: "b" }, "b", null);
    expect(session.lastError).toMatch(/unknown ref_id/);
  });

  it("retryService clears the down flag once health succeeds", async () => {
    const client = new ServiceClient("http://svc");
    const health = vi
      .fn()
      .mockRejectedValueOnce(new TypeError("down"))
      .mockResolvedValueOnce({ status: "ok" });
    (client as unknown as { health: typeof health }).health = health;
    const session = new Session(client);
    session.markServiceDown();
    expect(await session.retryService()).toBe(false);
    expect(session.serviceDown).toBe(true);
    expect(await session.retryService()).toBe(true);
    expect(session.serviceDown).toBe(false);
  });
});
