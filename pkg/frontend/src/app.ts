// DOM shell: sign-in, screening quiz, page-by-page annotation, expert
// console. Rendering only; all decisions live in the flow classes.

import { ApiClient, ApiError } from "./api.js";
import { ExpertConsole } from "./expert.js";
import { CardSetFlow, PageFlow, ScreeningFlow } from "./flows.js";
import type { Card, PagePayload } from "./types.js";
import { UNIVERSAL_TAGS } from "./types.js";
import { CardWizard } from "./wizard.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function sentenceView(card: Card): HTMLElement {
  const box = el("p", "sentence");
  card.context_tokens.forEach((word, i) => {
    const span = el("span", i === card.target_index ? "token-highlight" : "", word);
    box.appendChild(span);
    box.appendChild(document.createTextNode(" "));
  });
  return box;
}

export class App {
  private readonly root: HTMLElement;
  private api: ApiClient | null = null;

  constructor(root: HTMLElement, private readonly baseUrl: string = "") {
    this.root = root;
  }

  start(): void {
    this.renderSignIn();
  }

  private swap(...nodes: HTMLElement[]): void {
    this.root.replaceChildren(...nodes);
  }

  private renderSignIn(): void {
    const form = el("form", "signin");
    const title = el("h1", "", "crowdpos annotator");
    const input = el("input");
    input.placeholder = "access token";
    input.type = "password";
    const role = el("select");
    for (const value of ["worker", "expert"]) {
      const opt = el("option", "", value);
      opt.value = value;
      role.appendChild(opt);
    }
    const button = el("button", "", "sign in");
    button.type = "submit";
    form.append(title, input, role, button);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      if (!input.value) return;
      this.api = new ApiClient(this.baseUrl, input.value);
      if (role.value === "expert") {
        void this.renderExpert();
      } else {
        void this.renderWorkerEntry();
      }
    });
    this.swap(form);
  }

  private async renderWorkerEntry(): Promise<void> {
    const screening = new ScreeningFlow(this.api!);
    let state;
    try {
      state = await screening.start();
    } catch (err) {
      this.renderError(err);
      return;
    }
    switch (state.phase) {
      case "already_screened":
        await this.renderPages();
        return;
      case "denied":
        this.renderTerminal("Access denied", state.reason);
        return;
      case "quiz":
        this.renderQuiz(screening, state.flow);
        return;
      default:
        this.renderError(new Error("unexpected screening state"));
    }
  }

  private renderQuiz(screening: ScreeningFlow, flow: CardSetFlow): void {
    const container = el("div", "quiz");
    container.appendChild(el("h2", "", "Entry quiz"));
    const progress = el("p", "progress");
    const cardHost = el("div");
    const submit = el("button", "", "submit quiz");
    submit.disabled = true;

    const refresh = () => {
      progress.textContent = `${flow.completedCount} of ${flow.wizards.length} answered`;
      submit.disabled = !flow.allComplete || !screening.canSubmit;
      cardHost.replaceChildren(
        this.cardView(flow.current, () => {
          if (!flow.advance()) refresh();
          else refresh();
        }),
      );
    };
    submit.addEventListener("click", () => {
      void screening.submit(flow).then(
        (state) => {
          if (state.phase === "passed") {
            this.renderTerminal("Access granted", "You may start annotating.", () =>
              void this.renderPages(),
            );
          } else if (state.phase === "rejected") {
            this.renderTerminal("Access denied", "Too many quiz answers were incorrect.");
          }
        },
        (err) => {
          // network failure: keep the answers, allow a retry without
          // rebuilding the flow (no double submission server-side)
          this.renderBanner(container, `Submission failed (${String(err)}); try again.`);
          submit.disabled = false;
        },
      );
    });
    container.append(progress, cardHost, submit);
    this.swap(container);
    refresh();
  }

  private async renderPages(): Promise<void> {
    const pages = new PageFlow(this.api!);
    let state;
    try {
      state = await pages.next();
    } catch (err) {
      this.renderError(err);
      return;
    }
    if (state.phase === "no_work") {
      this.renderTerminal("No work available", state.reason);
      return;
    }
    if (state.phase === "blocked") {
      this.renderTerminal("Unavailable", state.reason);
      return;
    }
    if (state.phase !== "page") {
      this.renderError(new Error("unexpected page state"));
      return;
    }
    this.renderPage(pages, state.page, state.flow);
  }

  private renderPage(pages: PageFlow, page: PagePayload, flow: CardSetFlow): void {
    const container = el("div", "page");
    container.appendChild(el("h2", "", `Page ${page.page_id}`));
    const progress = el("p", "progress");
    const cardHost = el("div");
    const submit = el("button", "", "submit page");

    const refresh = () => {
      progress.textContent = `${flow.completedCount} of ${flow.wizards.length} items done`;
      submit.disabled = !flow.allComplete;
      cardHost.replaceChildren(
        this.cardView(flow.current, () => {
          flow.advance();
          refresh();
        }),
      );
    };
    submit.addEventListener("click", () => {
      void pages.submit(page, flow).then(
        (state) => {
          if (state.phase === "accepted") {
            void this.renderPages();
          } else if (state.phase === "redo") {
            this.renderTerminal("Page could not be accepted", state.reason, () =>
              void this.renderPages(),
            );
          }
        },
        (err) => this.renderError(err),
      );
    });
    container.append(progress, cardHost, submit);
    this.swap(container);
    refresh();
  }

  private cardView(wizard: CardWizard, onChange: () => void): HTMLElement {
    const box = el("div", "card");
    box.appendChild(sentenceView(wizard.card));
    if (wizard.isComplete) {
      box.appendChild(el("p", "done", `Answered: ${wizard.card.surface}`));
      const back = el("button", "link", "change answer");
      back.addEventListener("click", () => {
        wizard.back();
        onChange();
      });
      box.appendChild(back);
      return box;
    }
    const view = wizard.view();
    box.appendChild(el("p", "prompt", view.prompt));
    view.options.forEach((option, index) => {
      const button = el("button", "option");
      button.appendChild(el("span", "", option.text));
      if (option.example) button.appendChild(el("small", "", option.example));
      button.addEventListener("click", () => {
        wizard.choose(index);
        onChange();
      });
      box.appendChild(button);
    });
    if (view.stepsTaken > 0) {
      const back = el("button", "link", "back");
      back.addEventListener("click", () => {
        wizard.back();
        onChange();
      });
      box.appendChild(back);
    }
    return box;
  }

  private async renderExpert(): Promise<void> {
    const console_ = new ExpertConsole(this.api!);
    try {
      await console_.refresh();
    } catch (err) {
      this.renderError(err);
      return;
    }
    const container = el("div", "expert");
    container.appendChild(el("h2", "", "Expert console"));
    const notice = el("p", "notice");

    const tieHost = el("div");
    const render = () => {
      tieHost.replaceChildren();
      tieHost.appendChild(el("h3", "", `Ties (${console_.ties.length})`));
      if (console_.ties.length === 0) {
        tieHost.appendChild(el("p", "", "No ties waiting."));
      }
      for (const tie of console_.ties) {
        const row = el("div", "tie");
        row.appendChild(el("p", "", `${tie.surface} (${tie.lang}) — ${tie.context}`));
        row.appendChild(el("small", "", `votes: ${tie.tags.join(", ")}`));
        const picker = el("select");
        for (const tag of UNIVERSAL_TAGS) {
          const opt = el("option", "", tag);
          opt.value = tag;
          picker.appendChild(opt);
        }
        const button = el("button", "", "resolve");
        button.addEventListener("click", () => {
          void console_.resolveTie(tie.token_id, picker.value).then((outcome) => {
            notice.textContent = outcome.conflict
              ? "Already resolved by another expert; queue refreshed."
              : outcome.warning ?? "";
            render();
          });
        });
        row.append(picker, button);
        tieHost.appendChild(row);
      }
    };
    render();
    container.append(notice, tieHost);
    this.swap(container);
  }

  private renderTerminal(title: string, message: string, next?: () => void): void {
    const box = el("div", "terminal");
    box.appendChild(el("h2", "", title));
    box.appendChild(el("p", "", message));
    if (next) {
      const button = el("button", "", "continue");
      button.addEventListener("click", next);
      box.appendChild(button);
    }
    this.swap(box);
  }

  private renderError(err: unknown): void {
    const message =
      err instanceof ApiError ? `${err.status}: ${err.detail}` : String(err);
    this.renderTerminal("Something went wrong", message);
  }

  private renderBanner(container: HTMLElement, message: string): void {
    const banner = el("p", "banner", message);
    container.prepend(banner);
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const base = (window as { CROWDPOS_API?: string }).CROWDPOS_API ?? "";
  new App(document.getElementById("app")!, base).start();
}
