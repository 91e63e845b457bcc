/** Email presentation helpers.
 *
 * `emailView` is a pure function deciding how a payload is displayed;
 * `renderEmail` applies that decision to the DOM. Styled bodies go into a
 * fully sandboxed iframe (no scripts, no same-origin access, no network
 * loads beyond what's already been stripped server-side); plain bodies are
 * preformatted text. Malformed markup falls back to the plain body with a
 * notice.
 */

import type { EmailPayload } from "./types.js";

export interface EmailView {
  mode: "plain" | "styled" | "fallback";
  /** Text content for plain/fallback mode. */
  text: string;
  /** Full srcdoc for the sandboxed frame in styled mode. */
  srcdoc: string | null;
  notice: string | null;
}

/** iframe sandbox with no tokens: scripts, forms, plugins, same-origin
 * access, top navigation, and popups are all denied. */
export const FRAME_SANDBOX = "";

/** Content-Security-Policy embedded in the frame document: no network
 * fetches of any kind, inline styling only. */
export const FRAME_CSP =
  "default-src 'none'; style-src 'unsafe-inline'; img-src data:;";

export function looksRenderable(markup: string): boolean {
  if (markup.trim().length === 0) return false;
  // a styled body must contain at least one element tag
  return /<[a-z][^>]*>/i.test(markup);
}

export function buildSrcdoc(markup: string): string {
  return (
    "<!doctype html><html><head>" +
    `<meta http-equiv="Content-Security-Policy" content="${FRAME_CSP}">` +
    "<style>body{font-family:sans-serif;margin:8px}</style>" +
    "</head><body>" +
    markup +
    "</body></html>"
  );
}

export function emailView(email: EmailPayload): EmailView {
  if (email.body_markup === undefined) {
    return { mode: "plain", text: email.body_plain, srcdoc: null, notice: null };
  }
  if (!looksRenderable(email.body_markup)) {
    return {
      mode: "fallback",
      text: email.body_plain,
      srcdoc: null,
      notice: "styled version could not be displayed; showing plain text",
    };
  }
  return {
    mode: "styled",
    text: email.body_plain,
    srcdoc: buildSrcdoc(email.body_markup),
    notice: null,
  };
}

export function renderEmail(container: HTMLElement, email: EmailPayload): void {
  container.textContent = "";
  const view = emailView(email);
  if (view.notice !== null) {
    const note = container.ownerDocument.createElement("p");
    note.className = "notice";
    note.textContent = view.notice;
    container.appendChild(note);
  }
  if (view.mode === "styled" && view.srcdoc !== null) {
    const frame = container.ownerDocument.createElement("iframe");
    frame.setAttribute("sandbox", FRAME_SANDBOX);
    frame.setAttribute("referrerpolicy", "no-referrer");
    frame.setAttribute("title", "email body");
    frame.srcdoc = view.srcdoc;
    frame.className = "email-frame";
    container.appendChild(frame);
  } else {
    const pre = container.ownerDocument.createElement("pre");
    pre.className = "email-plain";
    pre.textContent = view.text;
    container.appendChild(pre);
  }
}

/** Keyboard mapping for the classification controls: p/h select, digits set
 * confidence, Enter submits. Returns the abstract intent or null. */
export type KeyIntent =
  | { kind: "classify"; value: "phishing" | "ham" }
  | { kind: "confidence"; value: 1 | 2 | 3 | 4 | 5 }
  | { kind: "submit" };

export function keyIntent(key: string): KeyIntent | null {
  if (key === "p" || key === "P") return { kind: "classify", value: "phishing" };
  if (key === "h" || key === "H") return { kind: "classify", value: "ham" };
  if (key >= "1" && key <= "5") {
    return { kind: "confidence", value: Number(key) as 1 | 2 | 3 | 4 | 5 };
  }
  if (key === "Enter") return { kind: "submit" };
  return null;
}
