/** End-to-end round trip against a live service.
 *
 * Skipped unless RELIGHT_SERVICE_URL points at a running `relight serve`
 * (scripts/ui_roundtrip.sh starts one and runs this). Verifies the thin-client
 * invariant: the bytes the UI renders are exactly the bytes a direct
 * POST /enhance returns for the same inputs. */
import { describe, expect, it } from "vitest";

import { ServiceClient } from "../src/api";
import { Session } from "../src/state";

const serviceUrl = process.env.RELIGHT_SERVICE_URL;
const maybe = serviceUrl ? describe : describe.skip;

// a tiny valid 4x4 dark PNG, generated once with the python package
const LOW_PNG_B64 =
  "iVBORw0KGgoAAAANSUhEUgAAAAQAAAAECAIAAAAmkwkpAAAAP0lEQVR4nAE0AMv/AT0TBscIJzAa6fIGDwEe" +
  "MAH6AAb6/fwW9AkC/eQPBf8X8dQ99uwDAgcIDwPy6DQBxPovHeaSFA4TFXbjAAAAAElFTkSuQmCC";

function lowBlob(): Blob {
  const bytes = Uint8Array.from(atob(LOW_PNG_B64), (c) => c.charCodeAt(0));
  return new Blob([bytes], { type: "image/png" });
}

maybe("live service round trip", () => {
  it("session render bytes equal a direct POST /enhance", async () => {
    const client = new ServiceClient(serviceUrl!);
    const refs = await client.references();
    expect(refs.length).toBeGreaterThan(0);
    const picked = refs[0];

    // what the UI would do: upload + click the first reference
    const session = new Session(client);
    session.setLow("low.png", lowBlob());
    await session.requestEnhance({ refId: picked.id }, picked.id, null);
    expect(session.results).toHaveLength(1);
    const uiBytes = new Uint8Array(session.results[0].bytes);

    // direct POST with the same inputs
    const direct = await client.enhance(lowBlob(), { refId: picked.id });
    expect(uiBytes).toEqual(new Uint8Array(direct.bytes));
    expect(session.results[0].meanV).toBeCloseTo(direct.meanV, 6);
  });

  it("unreachable service flips the down flag that drives the banner", async () => {
    const client = new ServiceClient("http://127.0.0.1:1"); // nothing listens here
    const session = new Session(client);
    session.setLow("low.png", lowBlob());
    await session.requestEnhance({ refId: "x" }, "x", null);
    expect(session.serviceDown).toBe(true);
  });
});
