// Expert console logic: the tie queue and the manual annotation queue.
// A 409 on resolve means another expert got there first; the console
// refreshes and reports the conflict instead of failing.

import { ApiClient, ApiError } from "./api.js";
import type { ManualTask, TieEntry } from "./types.js";

export interface ResolveOutcome {
  ok: boolean;
  conflict: boolean;
  warning: string | null;
}

export class ExpertConsole {
  ties: TieEntry[] = [];
  manual: ManualTask[] = [];

  constructor(private readonly api: ApiClient) {}

  async refresh(): Promise<void> {
    const [ties, manual] = await Promise.all([this.api.listTies(), this.api.listManual()]);
    this.ties = ties.ties;
    this.manual = manual.tasks;
  }

  async resolveTie(tokenId: string, tag: string): Promise<ResolveOutcome> {
    try {
      const result = await this.api.resolveTie(tokenId, tag);
      this.ties = this.ties.filter((t) => t.token_id !== tokenId);
      return { ok: true, conflict: false, warning: result.warning };
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        await this.refresh();
        return { ok: false, conflict: true, warning: null };
      }
      throw err;
    }
  }

  async tagManual(tokenId: string, tag: string): Promise<ResolveOutcome> {
    try {
      await this.api.tagManual(tokenId, tag);
      this.manual = this.manual.filter((t) => t.token_id !== tokenId);
      return { ok: true, conflict: false, warning: null };
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        await this.refresh();
        return { ok: false, conflict: true, warning: null };
      }
      throw err;
    }
  }
}
