// Multi-card flows: the screening quiz and the ten-item page. Both gate
// submission on every card being complete, and both build their
// submission payload verbatim from the wizard trails.

import { ApiClient, ApiError } from "./api.js";
import type { Card, ItemAnswer, PagePayload, ScreeningVerdict } from "./types.js";
import { CardWizard } from "./wizard.js";

export class CardSetFlow {
  readonly wizards: CardWizard[];
  private cursor = 0;

  constructor(cards: Card[]) {
    this.wizards = cards.map((c) => new CardWizard(c));
  }

  get current(): CardWizard {
    const wizard = this.wizards[this.cursor];
    if (!wizard) throw new Error("no current card");
    return wizard;
  }

  get currentIndex(): number {
    return this.cursor;
  }

  get completedCount(): number {
    return this.wizards.filter((w) => w.isComplete).length;
  }

  get allComplete(): boolean {
    return this.wizards.every((w) => w.isComplete);
  }

  /** Advance to the next incomplete card, if any. */
  advance(): boolean {
    const next = this.wizards.findIndex((w) => !w.isComplete);
    if (next === -1) return false;
    this.cursor = next;
    return true;
  }

  goTo(index: number): void {
    if (index < 0 || index >= this.wizards.length) throw new Error("card index out of range");
    this.cursor = index;
  }

  buildSubmission(): ItemAnswer[] {
    if (!this.allComplete) throw new Error("submission requires every card to be complete");
    return this.wizards.map((w) => w.toAnswer());
  }
}

export type ScreeningState =
  | { phase: "quiz"; flow: CardSetFlow }
  | { phase: "passed"; verdict: ScreeningVerdict }
  | { phase: "rejected"; verdict: ScreeningVerdict }
  | { phase: "already_screened" }
  | { phase: "denied"; reason: string };

export class ScreeningFlow {
  private submitting = false;

  constructor(private readonly api: ApiClient) {}

  async start(): Promise<ScreeningState> {
    try {
      const quiz = await this.api.getScreening();
      return { phase: "quiz", flow: new CardSetFlow(quiz.questions) };
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) return { phase: "already_screened" };
      if (err instanceof ApiError && err.status === 403) {
        return { phase: "denied", reason: err.detail };
      }
      throw err;
    }
  }

  get canSubmit(): boolean {
    return !this.submitting;
  }

  /** Double-submission safe: a retry after a network failure re-sends the
   * same answers, and the flow refuses concurrent submits. */
  async submit(flow: CardSetFlow): Promise<ScreeningState> {
    if (!flow.allComplete) throw new Error("submit disabled until all questions are answered");
    if (this.submitting) throw new Error("submission already in flight");
    this.submitting = true;
    try {
      const verdict = await this.api.submitScreening(flow.buildSubmission());
      return verdict.passed ? { phase: "passed", verdict } : { phase: "rejected", verdict };
    } finally {
      this.submitting = false;
    }
  }
}

export type PageState =
  | { phase: "page"; page: PagePayload; flow: CardSetFlow }
  | { phase: "accepted"; accepted: number }
  | { phase: "no_work"; reason: string }
  | { phase: "blocked"; reason: string }
  | { phase: "redo"; reason: string };

export class PageFlow {
  constructor(private readonly api: ApiClient) {}

  async next(): Promise<PageState> {
    try {
      const page = await this.api.nextPage();
      return { phase: "page", page, flow: new CardSetFlow(page.items) };
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        return { phase: "no_work", reason: err.detail };
      }
      if (err instanceof ApiError && err.status === 403) {
        return { phase: "blocked", reason: err.detail };
      }
      throw err;
    }
  }

  async submit(page: PagePayload, flow: CardSetFlow): Promise<PageState> {
    try {
      const receipt = await this.api.submitPage(page.page_id, flow.buildSubmission());
      return { phase: "accepted", accepted: receipt.accepted };
    } catch (err) {
      if (err instanceof ApiError && (err.status === 410 || err.status === 422)) {
        // expired reservation or a rejected trail: redo on a fresh page
        return { phase: "redo", reason: err.detail };
      }
      throw err;
    }
  }
}
