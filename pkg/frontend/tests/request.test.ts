import { describe, expect, it } from "vitest";

import {
  FEATURE_NAMES,
  buildRequest,
  defaultFeatures,
  serializeRequest,
  validateFeatures,
} from "../src/request.js";

const STATE = {
  features: defaultFeatures(),
  envelope: { attackMs: 5, decayMs: 50, amplitude: 1 },
};

describe("buildRequest", () => {
  it("is a pure function of the UI state", () => {
    expect(serializeRequest(STATE)).toBe(serializeRequest(STATE));
    const copy = JSON.parse(JSON.stringify(STATE));
    expect(serializeRequest(copy)).toBe(serializeRequest(STATE));
  });

  it("carries all seven features and the ad envelope", () => {
    const body = buildRequest(STATE);
    expect(Object.keys(body.features)).toEqual([...FEATURE_NAMES]);
    expect(body.envelope).toEqual(
      { kind: "ad", attack_ms: 5, decay_ms: 50, amplitude: 1 });
  });

  it("defaults every slider to 0.5", () => {
    for (const name of FEATURE_NAMES) {
      expect(STATE.features[name]).toBe(0.5);
    }
  });
});

describe("validateFeatures", () => {
  it("accepts the unit cube", () => {
    expect(validateFeatures(defaultFeatures())).toEqual([]);
  });

  it("names offending fields", () => {
    const features = defaultFeatures();
    features.brightness = 1.3;
    features.warmth = -0.1;
    expect(validateFeatures(features)).toEqual(["brightness", "warmth"]);
  });
});
