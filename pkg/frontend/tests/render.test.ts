import { describe, expect, it } from "vitest";

import {
  FRAME_CSP,
  FRAME_SANDBOX,
  buildSrcdoc,
  emailView,
  keyIntent,
  looksRenderable,
} from "../src/render.js";
import type { EmailPayload } from "../src/types.js";

const BASE: EmailPayload = {
  id: "e1",
  subject: "s",
  sender: "a@b",
  body_plain: "plain text body",
};

describe("emailView", () => {
  it("uses plain mode when no markup is present", () => {
    const view = emailView(BASE);
    expect(view.mode).toBe("plain");
    expect(view.text).toBe("plain text body");
    expect(view.srcdoc).toBeNull();
    expect(view.notice).toBeNull();
  });

  it("uses styled mode with a CSP-bearing srcdoc for real markup", () => {
    const view = emailView({ ...BASE, body_markup: "<p>Hello <b>there</b></p>" });
    expect(view.mode).toBe("styled");
    expect(view.srcdoc).toContain("Content-Security-Policy");
    expect(view.srcdoc).toContain(FRAME_CSP);
    expect(view.srcdoc).toContain("<p>Hello <b>there</b></p>");
  });

  it("falls back to plain text with a notice for unrenderable markup", () => {
    for (const markup of ["", "   ", "just words, no tags"]) {
      const view = emailView({ ...BASE, body_markup: markup });
      expect(view.mode).toBe("fallback");
      expect(view.text).toBe("plain text body");
      expect(view.srcdoc).toBeNull();
      expect(view.notice).toContain("plain text");
    }
  });
});

describe("frame hardening", () => {
  it("uses an empty sandbox attribute (all capabilities denied)", () => {
    expect(FRAME_SANDBOX).toBe("");
  });

  it("forbids all network loads in the frame CSP", () => {
    expect(FRAME_CSP).toContain("default-src 'none'");
    expect(FRAME_CSP).not.toContain("script-src");
  });

  it("embeds the CSP meta tag before the body content", () => {
    const doc = buildSrcdoc("<p>x</p>");
    const metaAt = doc.indexOf("Content-Security-Policy");
    const bodyAt = doc.indexOf("<p>x</p>");
    expect(metaAt).toBeGreaterThan(-1);
    expect(metaAt).toBeLessThan(bodyAt);
  });
});

describe("looksRenderable", () => {
  it("requires at least one element tag", () => {
    expect(looksRenderable("<div>x</div>")).toBe(true);
    expect(looksRenderable("<BR>")).toBe(true);
    expect(looksRenderable("a < b and b > c")).toBe(false);
    expect(looksRenderable("")).toBe(false);
    expect(looksRenderable("  \n ")).toBe(false);
  });
});

describe("keyIntent", () => {
  it("maps classification, confidence, and submit keys", () => {
    expect(keyIntent("p")).toEqual({ kind: "classify", value: "phishing" });
    expect(keyIntent("P")).toEqual({ kind: "classify", value: "phishing" });
    expect(keyIntent("h")).toEqual({ kind: "classify", value: "ham" });
    expect(keyIntent("H")).toEqual({ kind: "classify", value: "ham" });
    for (const k of ["1", "2", "3", "4", "5"] as const) {
      expect(keyIntent(k)).toEqual({ kind: "confidence", value: Number(k) });
    }
    expect(keyIntent("Enter")).toEqual({ kind: "submit" });
  });

  it("ignores unmapped keys", () => {
    for (const k of ["0", "6", "9", "a", " ", "Escape", "Tab", "x"]) {
      expect(keyIntent(k)).toBeNull();
    }
  });
});
