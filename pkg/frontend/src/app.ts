// Challenge widget: fetch a scene, render its SVG inline, take a typed
// caption, submit, show the server's verdict. The widget never scores
// anything itself.

import {
  ApiError,
  Challenge,
  FetchLike,
  Verdict,
  fetchChallenge,
  submitAnswer,
} from "./api.js";

export interface WidgetOptions {
  base?: string;
  now?: () => number; // seconds, comparable to the server's expires_at
  tickMs?: number;
}

type State = "empty" | "open" | "expired" | "graded" | "unavailable";

export class CaptchaWidget {
  readonly root: HTMLElement;
  private fetchFn: FetchLike;
  private base: string;
  private now: () => number;
  private tickMs: number;

  state: State = "empty";
  challenge: Challenge | null = null;
  verdict: Verdict | null = null;
  private verdictShown = false;
  private timer: ReturnType<typeof setInterval> | null = null;

  private banner: HTMLElement;
  private scene: HTMLElement;
  private countdown: HTMLElement;
  private form: HTMLFormElement;
  private input: HTMLInputElement;
  private submitBtn: HTMLButtonElement;
  private verdictBox: HTMLElement;
  private refreshBtn: HTMLButtonElement;

  constructor(root: HTMLElement, fetchFn: FetchLike, opts: WidgetOptions = {}) {
    this.root = root;
    this.fetchFn = fetchFn;
    this.base = opts.base ?? "";
    this.now = opts.now ?? (() => Date.now() / 1000);
    this.tickMs = opts.tickMs ?? 1000;
    root.innerHTML = `
      <div class="banner" id="banner" hidden></div>
      <div class="scene" id="scene"></div>
      <div class="countdown" id="countdown"></div>
      <form id="caption-form">
        <input id="caption" type="text" autocomplete="off"
               placeholder="describe the image" maxlength="500" disabled>
        <button id="submit" type="submit" disabled>submit</button>
      </form>
      <div class="verdict" id="verdict" hidden></div>
      <button id="refresh" hidden>new challenge</button>
    `;
    const q = <T extends HTMLElement>(sel: string) =>
      root.querySelector(sel) as T;
    this.banner = q("#banner");
    this.scene = q("#scene");
    this.countdown = q("#countdown");
    this.form = q<HTMLFormElement>("#caption-form");
    this.input = q<HTMLInputElement>("#caption");
    this.submitBtn = q<HTMLButtonElement>("#submit");
    this.verdictBox = q("#verdict");
    this.refreshBtn = q<HTMLButtonElement>("#refresh");
    this.form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.submit();
    });
    this.refreshBtn.addEventListener("click", () => void this.load());
  }

  async load(): Promise<void> {
    this.stopTimer();
    this.verdict = null;
    this.verdictShown = false;
    this.verdictBox.hidden = true;
    this.verdictBox.textContent = "";
    this.refreshBtn.hidden = true;
    this.hideBanner();
    try {
      this.challenge = await fetchChallenge(this.fetchFn, this.base);
    } catch (err) {
      this.challenge = null;
      this.state = "unavailable";
      this.scene.innerHTML = "";
      this.setInputEnabled(false);
      this.showBanner(
        err instanceof ApiError && err.status === 503
          ? "challenge pool unavailable — try again later"
          : `could not load a challenge (${(err as Error).message})`,
      );
      this.refreshBtn.hidden = false;
      return;
    }
    // the SVG arrives inline and is injected verbatim
    this.scene.innerHTML = this.challenge.svg;
    this.state = "open";
    this.setInputEnabled(true);
    this.input.value = "";
    this.renderCountdown();
    this.timer = setInterval(() => this.renderCountdown(), this.tickMs);
  }

  remainingSeconds(): number {
    if (!this.challenge) return 0;
    return this.challenge.expires_at - this.now();
  }

  private renderCountdown(): void {
    if (this.state !== "open") return;
    const left = this.remainingSeconds();
    if (left <= 0) {
      this.expire();
      return;
    }
    this.countdown.textContent = `expires in ${Math.ceil(left)}s`;
  }

  private expire(): void {
    this.state = "expired";
    this.stopTimer();
    this.countdown.textContent = "";
    this.setInputEnabled(false);
    this.showBanner("challenge expired — try again");
    this.refreshBtn.hidden = false;
  }

  async submit(): Promise<void> {
    if (!this.challenge || this.state === "expired"
        || this.state === "unavailable") {
      return;
    }
    const caption = this.input.value.trim();
    if (!caption) {
      this.showBanner("type a description first");
      return; // blocked client-side; nothing is sent
    }
    this.hideBanner();
    let verdict: Verdict;
    try {
      verdict = await submitAnswer(
        this.fetchFn, this.challenge.session_id, caption, this.base);
    } catch (err) {
      if (err instanceof ApiError && (err.status === 409 || err.status === 410)) {
        this.showBanner("challenge expired — try again");
        this.refreshBtn.hidden = false;
      } else {
        this.showBanner(`submission failed (${(err as Error).message})`);
      }
      return;
    }
    this.verdict = verdict;
    this.state = "graded";
    this.stopTimer();
    this.countdown.textContent = "";
    if (!this.verdictShown) {
      // the verdict is rendered exactly once per session
      this.verdictShown = true;
      this.verdictBox.hidden = false;
      this.verdictBox.textContent =
        `${verdict.decision} (score ${verdict.score.toFixed(2)})`;
      this.verdictBox.dataset.decision = verdict.decision;
    }
    this.refreshBtn.hidden = false;
  }

  private setInputEnabled(on: boolean): void {
    this.input.disabled = !on;
    this.submitBtn.disabled = !on;
  }

  private showBanner(text: string): void {
    this.banner.textContent = text;
    this.banner.hidden = false;
  }

  private hideBanner(): void {
    this.banner.hidden = true;
    this.banner.textContent = "";
  }

  private stopTimer(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }
}
