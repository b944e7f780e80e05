"""HTTP service exposing the annotation pipeline.

Bearer-token auth from the static config maps callers to worker, expert,
or admin principals. Endpoints delegate to the event-sourced Project;
domain errors carry their HTTP status.
"""

import csv
import io
import json
from pathlib import Path

from fastapi import Depends, FastAPI, Header, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel, Field

from .project import Project, ProjectError


class TrailStep(BaseModel):
    node: str
    answer_index: int


class ItemAnswer(BaseModel):
    item_id: str
    answer_index: int | None = None
    trail: list[TrailStep] | None = None

    def to_dict(self) -> dict:
        out: dict = {"item_id": self.item_id}
        if self.trail is not None:
            out["trail"] = [{"node": s.node, "answer_index": s.answer_index} for s in self.trail]
        if self.answer_index is not None:
            out["answer_index"] = self.answer_index
        return out


class AnswerSubmission(BaseModel):
    answers: list[ItemAnswer] = Field(default_factory=list)


class TieResolution(BaseModel):
    tag: str


class Principal(BaseModel):
    role: str
    worker_id: str | None = None
    expert_id: str | None = None
    locale: str = ""
    spanish_certified: bool = False


def load_auth(config_doc: dict) -> dict[str, Principal]:
    tokens = {}
    for token, entry in (config_doc.get("auth", {}).get("tokens", {})).items():
        tokens[token] = Principal(**entry)
    return tokens


def create_app(project: Project, auth_tokens: dict[str, Principal] | None = None) -> FastAPI:
    if auth_tokens is None:
        auth_tokens = load_auth(project.config_doc)

    app = FastAPI(title="crowdpos annotation service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.project = project

    def principal(authorization: str = Header(default="")) -> Principal:
        token = authorization.removeprefix("Bearer ").strip()
        entry = auth_tokens.get(token)
        if entry is None:
            raise HTTPException(status_code=401, detail="unknown bearer token")
        return entry

    def worker_principal(p: Principal = Depends(principal)) -> Principal:
        if p.role != "worker" or not p.worker_id:
            raise HTTPException(status_code=403, detail="worker credentials required")
        return p

    def expert_principal(p: Principal = Depends(principal)) -> Principal:
        if p.role != "expert" or not p.expert_id:
            raise HTTPException(status_code=403, detail="expert credentials required")
        return p

    def run(fn, *args):
        try:
            return fn(*args)
        except ProjectError as exc:
            raise HTTPException(status_code=exc.http_status, detail=str(exc)) from None

    def ensure(p: Principal):
        return run(project.ensure_worker, p.worker_id, p.locale, p.spanish_certified)

    @app.get("/api/screening")
    def get_screening(p: Principal = Depends(worker_principal)):
        ensure(p)
        return run(project.get_screening, p.worker_id)

    @app.post("/api/screening")
    def post_screening(body: AnswerSubmission, p: Principal = Depends(worker_principal)):
        ensure(p)
        return run(project.submit_screening, p.worker_id, [a.to_dict() for a in body.answers])

    @app.get("/api/pages/next")
    def next_page(p: Principal = Depends(worker_principal)):
        ensure(p)
        return run(project.next_page, p.worker_id)

    @app.post("/api/pages/{page_id}")
    def submit_page(page_id: str, body: AnswerSubmission, p: Principal = Depends(worker_principal)):
        ensure(p)
        return run(project.submit_page, p.worker_id, page_id, [a.to_dict() for a in body.answers])

    @app.get("/api/expert/ties")
    def list_ties(p: Principal = Depends(expert_principal)):
        return {"ties": run(project.list_ties)}

    @app.post("/api/expert/ties/{token_id}")
    def resolve_tie(token_id: str, body: TieResolution, p: Principal = Depends(expert_principal)):
        return run(project.resolve_tie_token, token_id, body.tag, p.expert_id)

    @app.get("/api/expert/manual")
    def manual_tasks(p: Principal = Depends(expert_principal)):
        return {"tasks": run(project.manual_tasks)}

    @app.post("/api/expert/manual/{token_id}")
    def tag_manual(token_id: str, body: TieResolution, p: Principal = Depends(expert_principal)):
        return run(project.tag_manual, token_id, body.tag, p.expert_id)

    @app.get("/api/reports")
    def reports(task: str | None = Query(default=None), p: Principal = Depends(principal)):
        if task is not None and task not in ("tsq", "eng_qt", "spa_qt"):
            raise HTTPException(status_code=400, detail=f"unknown task {task}")
        return run(project.reports, task)

    @app.get("/api/export", response_class=PlainTextResponse)
    def export(p: Principal = Depends(principal)):
        return export_tsv(project)

    return app


def export_tsv(project: Project) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter="\t", lineterminator="\n")
    writer.writerow(["token_id", "surface", "lang", "tag", "source", "split"])
    for row in project.export_rows():
        writer.writerow(row)
    return buf.getvalue()


def app_from_data_dir(data_dir: str | Path, config: str | Path | None = None) -> FastAPI:
    project = Project.open(data_dir)
    tokens = None
    if config is not None:
        with open(config, encoding="utf-8") as fh:
            tokens = load_auth(json.load(fh))
    return create_app(project, tokens)
