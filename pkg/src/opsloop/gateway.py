"""HTTP front door: event ingestion, case browsing, feedback submission,
skill and knowledge inspection, eval triggers.

All bodies use the canonical key-ordered JSON serialization. Every non-2xx
response carries an ApiError body {code, message, detail}.
"""

from __future__ import annotations

import logging
import typing

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from starlette.exceptions import HTTPException as StarletteHTTPException

from . import views
from .core import Feedback, OperationalEvent, canonical_line
from .engine import Engine
from .errors import (
    Conflict,
    DatasetError,
    DomainError,
    InvalidTag,
    NotFound,
    OpsLoopError,
    ParamError,
    ReasonerUnavailable,
    ScriptError,
    SpecError,
    StaleVersion,
    UnknownSource,
    ValidationFailure,
)
from .evaluation import run_pass_at_k
from .bundled import engine_factory, load_bundle

logger = logging.getLogger(__name__)

_ERROR_STATUS: list[tuple[type, str, int]] = [
    (NotFound, "not_found", 404),
    (UnknownSource, "not_found", 404),
    (Conflict, "conflict", 409),
    (StaleVersion, "conflict", 409),
    (ReasonerUnavailable, "degraded", 503),
    (ValidationFailure, "validation", 400),
    (InvalidTag, "validation", 400),
    (ParamError, "validation", 400),
    (DatasetError, "validation", 400),
    (DomainError, "validation", 400),
    (SpecError, "validation", 400),
    (ScriptError, "validation", 400),
]


class CanonicalJSONResponse(JSONResponse):
    def render(self, content: typing.Any) -> bytes:
        return canonical_line(content).encode("utf-8")


def _api_error(code: str, message: str, status: int, detail=None) -> CanonicalJSONResponse:
    return CanonicalJSONResponse(
        status_code=status, content={"code": code, "message": message, "detail": detail}
    )


def create_app(engine: Engine, static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="opsloop gateway", default_response_class=CanonicalJSONResponse)
    app.state.engine = engine

    @app.exception_handler(OpsLoopError)
    async def _domain_error(request: Request, exc: OpsLoopError):
        for etype, code, status in _ERROR_STATUS:
            if isinstance(exc, etype):
                return _api_error(code, str(exc), status)
        logger.exception("unhandled domain error")
        return _api_error("internal", str(exc), 500)

    @app.exception_handler(StarletteHTTPException)
    async def _http_error(request: Request, exc: StarletteHTTPException):
        # unknown routes and framework-level HTTP errors keep the ApiError shape
        code = "not_found" if exc.status_code == 404 else "validation" if exc.status_code < 500 else "internal"
        return _api_error(code, str(exc.detail), exc.status_code)

    @app.exception_handler(RequestValidationError)
    async def _request_error(request: Request, exc: RequestValidationError):
        return _api_error("validation", "malformed request", 400, detail=exc.errors())

    @app.exception_handler(Exception)
    async def _internal_error(request: Request, exc: Exception):
        logger.exception("internal error")
        return _api_error("internal", str(exc), 500)

    # -- events / cases ----------------------------------------------------

    @app.post("/events", status_code=201)
    def post_event(body: dict):
        event = OperationalEvent.from_dict(body)
        case = engine.run_event(event)
        return views.case_summary(case)

    @app.get("/cases")
    def list_cases(
        business: str | None = None,
        module: str | None = None,
        kind: str | None = None,
        limit: int = 50,
        cursor: str | None = None,
    ):
        limit = max(1, min(limit, 500))
        cases = engine.memory.list_cases(business=business, module=module, kind=kind, limit=limit, cursor=cursor)
        return views.case_page(cases, limit)

    @app.get("/cases/{case_id}")
    def get_case(case_id: str):
        return engine.memory.get(case_id).to_dict()

    @app.post("/cases/{case_id}/feedback")
    def post_feedback(case_id: str, body: dict):
        case = engine.memory.get(case_id)
        if case.feedback is not None:
            raise Conflict(f"case {case_id} already has feedback")
        text = (body.get("text") or "").strip()
        if not text:
            raise ValidationFailure("feedback text must be non-empty")
        feedback = Feedback(
            feedback_id=f"fb-{case_id}",
            case_id=case_id,
            author=body.get("author", "anonymous"),
            text=text,
            submitted_at=engine.now(),
        )
        decision = engine.router.route(case, feedback)
        report = engine.router.execute(decision, case, feedback)
        diff_link = None
        for outcome in report.outcomes:
            if outcome.action.startswith("skill_update") and outcome.status == "ok" and outcome.skill_version:
                diff_link = (
                    f"/skills/{outcome.skill_id}/diff?from={outcome.skill_version - 1}&to={outcome.skill_version}"
                )
        return {
            "feedback": feedback.to_dict(),
            "decision": decision.to_dict(),
            "report": report.to_dict(),
            "skill_diff_link": diff_link,
        }

    # -- skills -------------------------------------------------------------

    @app.get("/skills")
    def list_skills():
        return views.skill_summary(engine.pool)

    @app.get("/skills/{skill_id}")
    def get_skill(skill_id: str, version: int | None = None):
        return views.skill_detail(engine.pool, skill_id, version)

    @app.get("/skills/{skill_id}/diff")
    def get_skill_diff(skill_id: str, request: Request):
        # `from` is a reserved word, so the query string is read directly
        qp = request.query_params
        try:
            from_version = int(qp.get("from", qp.get("from_version", 0)))
            to_version = int(qp.get("to", qp.get("to_version", 0)))
        except ValueError as exc:
            raise ValidationFailure(f"diff versions must be integers: {exc}") from exc
        return views.skill_diff(engine.pool, skill_id, from_version, to_version)

    # -- knowledge ------------------------------------------------------------

    @app.get("/knowledge/search")
    def knowledge_search(request: Request):
        params = dict(request.query_params)
        mode = params.pop("mode", "vector")
        return views.knowledge_search(engine.knowledge, mode, params)

    # -- eval -----------------------------------------------------------------

    @app.post("/eval/run")
    def eval_run(body: dict):
        dataset_name = body.get("dataset", "table3-replay")
        k = int(body.get("k", 5))
        seed = int(body.get("seed", 0))
        mode = body.get("mode", "full")
        bundle = load_bundle(dataset_name)
        report = run_pass_at_k(bundle.dataset(), engine_factory(bundle, mode, seed=seed), k=k, seed=seed, mode=mode)
        report_id = f"{dataset_name}-{mode}-k{k}-s{seed}"
        engine.eval_reports[report_id] = report.to_dict()
        return {"report_id": report_id, "report": report.to_dict()}

    @app.get("/eval/reports/{report_id}")
    def eval_report(report_id: str):
        if report_id not in engine.eval_reports:
            raise NotFound(f"no eval report {report_id}")
        return engine.eval_reports[report_id]

    # -- health ---------------------------------------------------------------

    @app.get("/health")
    def health():
        from . import __version__

        return {
            "service": "opsloop",
            "version": __version__,
            "scenario_id": engine.spec.scenario_id,
            "stores": engine.store_sizes(),
        }

    if static_dir:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="console")

    return app


def serve(engine: Engine, port: int = 8080, host: str = "127.0.0.1", static_dir: str | None = None) -> None:
    import uvicorn

    uvicorn.run(create_app(engine, static_dir=static_dir), host=host, port=port, log_level="info")
