"""HTTP face of the toolkit: one endpoint per pipeline stage plus pure ops.

Stage endpoints operate on a server-side workspace directory named in the
request. Toolkit errors come back as a structured body carrying the same
category and exit code the CLI uses: validation 400, data 422, numeric 500.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, pipeline
from ..config import load_config
from ..errors import HistoseqError
from ..flops import bilstm_flops
from ..scanning import GridDims, continuity_cost, scan_order
from . import schemas

_STATUS_BY_CATEGORY = {"validation": 400, "data": 422, "numeric": 500}


def create_app() -> FastAPI:
    app = FastAPI(title="histoseq", version=__version__)

    @app.exception_handler(HistoseqError)
    async def histoseq_error_handler(request: Request, exc: HistoseqError):
        return JSONResponse(
            status_code=_STATUS_BY_CATEGORY.get(exc.category, 500),
            content={
                "error": {
                    "category": exc.category,
                    "message": str(exc),
                    "exit_code": exc.exit_code,
                }
            },
        )

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/flops", response_model=schemas.FlopsResponse)
    def flops(req: schemas.FlopsRequest):
        report = bilstm_flops(req.input_size, req.hidden_units, req.class_count)
        return {"report": report.as_dict(), "text": report.as_text()}

    @app.post("/scan", response_model=schemas.ScanResponse)
    def scan(req: schemas.ScanRequest):
        order = scan_order(GridDims(req.rows, req.cols), req.strategy)
        return {
            "rows": req.rows,
            "cols": req.cols,
            "strategy": req.strategy,
            "visits": [list(v) for v in order.visits],
            "continuity_cost": continuity_cost(order),
        }

    @app.post("/extract-regions")
    def extract_regions(req: schemas.ExtractRegionsRequest):
        config = load_config(req.config_path)
        return pipeline.extract_regions(config, req.workspace, req.xml, req.image)

    @app.post("/tile")
    def tile(req: schemas.WorkspaceRequest):
        config = load_config(req.config_path)
        return pipeline.tile(config, req.workspace)

    @app.post("/extract-features")
    def extract_features(req: schemas.WorkspaceRequest):
        config = load_config(req.config_path)
        return pipeline.extract_features(config, req.workspace)

    @app.post("/train")
    def train(req: schemas.WorkspaceRequest):
        config = load_config(req.config_path)
        return pipeline.train(config, req.workspace)

    @app.post("/evaluate")
    def evaluate(req: schemas.WorkspaceRequest):
        config = load_config(req.config_path)
        return pipeline.evaluate(config, req.workspace)

    @app.post("/cross-validate")
    def cross_validate(req: schemas.WorkspaceRequest):
        config = load_config(req.config_path)
        return pipeline.cross_validate(config, req.workspace)

    @app.post("/run-all")
    def run_all(req: schemas.RunAllRequest):
        config = load_config(req.config_path)
        return pipeline.run_all(config, req.workspace, req.xml, req.image)

    return app


app = create_app()
