"""HTTP/JSON API over a summary bundle.

Thin wrappers around :class:`SummaryBundle` payload methods; every response
body equals the corresponding in-process call. Errors are always
``{"error": <code>, "detail": <message>}``: 400 for malformed input, 404
for unknown ids or routes.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel
from starlette.exceptions import HTTPException as StarletteHTTPException

from .bundle import SummaryBundle


class CascadeRequest(BaseModel):
    cluster_id: str
    trigger_top_n: int | None = None
    class_context: str | None = None


def _error(status: int, code: str, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": code, "detail": detail})


def create_app(bundle: SummaryBundle, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="neuromap", docs_url=None, redoc_url=None)

    @app.exception_handler(StarletteHTTPException)
    async def _http_error(request: Request, exc: StarletteHTTPException):
        code = "not_found" if exc.status_code == 404 else "bad_request"
        return _error(exc.status_code, code, str(exc.detail))

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        return _error(400, "bad_request", str(exc.errors()))

    @app.exception_handler(KeyError)
    async def _missing(request: Request, exc: KeyError):
        return _error(404, "not_found", str(exc.args[0]) if exc.args else "unknown id")

    @app.exception_handler(ValueError)
    async def _invalid(request: Request, exc: ValueError):
        return _error(400, "bad_request", str(exc))

    @app.get("/api/manifest")
    def manifest():
        return bundle.manifest_summary()

    @app.get("/api/layers")
    def layers():
        return bundle.layers_payload()

    @app.get("/api/clusters")
    def clusters(layer: str | None = None):
        return bundle.clusters_payload(layer)

    @app.get("/api/embedding")
    def embedding(filter: str = "all", pinned: str | None = None):
        pinned_ids = [p for p in pinned.split(",") if p] if pinned else None
        return bundle.embedding_view(filter, pinned_ids)

    @app.get("/api/neighbors/{neuron}")
    def neighbors(neuron: str, k: int = 10):
        return bundle.neighbors_payload(neuron, k)

    @app.get("/api/patches/{neuron}")
    def patches(neuron: str, limit: int = 5):
        return bundle.patches_payload(neuron, limit)

    @app.get("/api/graph/{class_label}")
    def graph(class_label: str, min_importance: float = 0.0):
        return bundle.class_graph(class_label, min_importance)

    @app.post("/api/cascade")
    def cascade(request: CascadeRequest):
        return bundle.cascade(
            request.cluster_id,
            trigger_top_n=request.trigger_top_n,
            class_context=request.class_context,
        )

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def serve(bundle_dir: str | Path, port: int = 8765, host: str = "127.0.0.1",
          ui_dir: str | Path | None = None) -> None:
    """Load the bundle and block serving it."""
    import uvicorn

    bundle = SummaryBundle(bundle_dir)
    app = create_app(bundle, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
