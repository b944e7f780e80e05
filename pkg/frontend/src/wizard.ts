// One card's question walk. A token-specific question completes after a
// single selection; a tree card shows one node at a time until an answer
// with no next node ends the walk. The submission is the verbatim trail;
// the client never sees or computes a POS tag.

import type { Card, ItemAnswer, TrailStep, TreeTask, TsqTask } from "./types.js";

export interface WizardView {
  prompt: string;
  options: { text: string; example: string | null }[];
  stepsTaken: number;
  complete: boolean;
}

export class CardWizard {
  readonly card: Card;
  private trail: TrailStep[] = [];
  private completed = false;

  constructor(card: Card) {
    this.card = card;
  }

  get isComplete(): boolean {
    return this.completed;
  }

  get stepsTaken(): number {
    return this.trail.length;
  }

  private currentNodeId(): string {
    const task = this.card.task;
    if (task.kind === "tsq") return task.question_id;
    const last = this.trail[this.trail.length - 1];
    if (last === undefined) return task.root;
    const node = (this.card.task as TreeTask).nodes[last.node];
    const chosen = node?.answers[last.answer_index];
    if (!chosen || chosen.next === null) {
      throw new Error("walk already ended");
    }
    return chosen.next;
  }

  view(): WizardView {
    if (this.completed) {
      return { prompt: "", options: [], stepsTaken: this.trail.length, complete: true };
    }
    const task = this.card.task;
    if (task.kind === "tsq") {
      return {
        prompt: task.prompt,
        options: task.answers.map((a) => ({ text: a.text, example: a.example })),
        stepsTaken: this.trail.length,
        complete: false,
      };
    }
    const node = task.nodes[this.currentNodeId()];
    if (!node) throw new Error("server sent a dangling node reference");
    return {
      prompt: node.prompt,
      options: node.answers.map((a) => ({ text: a.text, example: a.example })),
      stepsTaken: this.trail.length,
      complete: false,
    };
  }

  /** Apply one selection; returns true when the card is now complete. */
  choose(answerIndex: number): boolean {
    if (this.completed) throw new Error("card already complete");
    const task = this.card.task;
    if (task.kind === "tsq") {
      this.assertIndex(answerIndex, (task as TsqTask).answers.length);
      this.trail = [{ node: task.question_id, answer_index: answerIndex }];
      this.completed = true;
      return true;
    }
    const nodeId = this.currentNodeId();
    const node = task.nodes[nodeId];
    if (!node) throw new Error("server sent a dangling node reference");
    this.assertIndex(answerIndex, node.answers.length);
    this.trail.push({ node: nodeId, answer_index: answerIndex });
    if (node.answers[answerIndex]!.next === null) {
      this.completed = true;
    }
    return this.completed;
  }

  /** Undo the latest selection; truncates the trail by one step. */
  back(): void {
    if (this.trail.length === 0) return;
    this.trail.pop();
    this.completed = false;
  }

  toAnswer(): ItemAnswer {
    if (!this.completed) throw new Error("card is not complete");
    if (this.card.task.kind === "tsq") {
      return { item_id: this.card.item_id, answer_index: this.trail[0]!.answer_index };
    }
    return { item_id: this.card.item_id, trail: [...this.trail] };
  }

  private assertIndex(index: number, length: number): void {
    if (!Number.isInteger(index) || index < 0 || index >= length) {
      throw new Error(`answer index ${index} out of range`);
    }
  }
}
