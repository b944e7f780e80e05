// Wire types for the annotation service. Worker-facing payloads never
// carry POS tags; the client only moves opaque answer indices around.

export interface TsqAnswerOption {
  text: string;
  example: string | null;
}

export interface TsqTask {
  kind: "tsq";
  question_id: string;
  prompt: string;
  answers: TsqAnswerOption[];
}

export interface TreeAnswerOption {
  text: string;
  example: string | null;
  /** id of the next node, or null when this answer ends the walk */
  next: string | null;
}

export interface TreeNode {
  prompt: string;
  answers: TreeAnswerOption[];
}

export interface TreeTask {
  kind: "tree";
  tree_id: string;
  root: string;
  nodes: Record<string, TreeNode>;
}

export interface Card {
  item_id: string;
  token_id: string;
  surface: string;
  context: string;
  context_tokens: string[];
  target_index: number;
  task: TsqTask | TreeTask;
}

export interface TrailStep {
  node: string;
  answer_index: number;
}

export interface ItemAnswer {
  item_id: string;
  answer_index?: number;
  trail?: TrailStep[];
}

export interface ScreeningQuiz {
  worker_id: string;
  questions: Card[];
}

export interface ScreeningVerdict {
  passed: boolean;
  correct: number;
  wrong: number;
}

export interface PagePayload {
  page_id: string;
  price_cents: number;
  items: Card[];
}

export interface PageReceipt {
  page_id: string;
  accepted: number;
  worker_status: string;
}

export interface TieEntry {
  token_id: string;
  surface: string;
  context: string;
  lang: string;
  tags: string[];
}

export interface TieResolutionResult {
  token_id: string;
  tag: string;
  warning: string | null;
}

export interface ManualTask {
  token_id: string;
  surface: string;
  context: string;
  lang: string;
}

export const UNIVERSAL_TAGS = [
  "ADJ", "ADP", "ADV", "AUX", "CONJ", "SCONJ", "DET", "INTJ", "NOUN",
  "NUM", "PART", "PRON", "PROPN", "PUNCT", "SYM", "VERB", "X",
] as const;

export type UniversalTag = (typeof UNIVERSAL_TAGS)[number];
