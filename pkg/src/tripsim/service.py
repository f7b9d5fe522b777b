"""HTTP service exposing the experiment runners.

POST a run configuration (the same document the YAML files hold) to
an experiment endpoint; the response carries the output files as
strings plus a short summary, leaving all filesystem writes to the
caller.  Config problems come back as 400/422, numeric blow-ups as
500 with kind "numeric".
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import __version__
from .config import ExperimentConfig
from .engine import NumericError
from .experiments import RUNNERS

app = FastAPI(title="tripsim", version=__version__)


class RunResponse(BaseModel):
    files: dict[str, str]
    summary: dict


def _execute(name: str, config: ExperimentConfig) -> RunResponse:
    try:
        output = RUNNERS[name](config)
    except NumericError as err:
        raise HTTPException(
            status_code=500, detail={"kind": "numeric", "message": str(err)}
        ) from err
    except (ValueError, OSError) as err:
        raise HTTPException(
            status_code=400, detail={"kind": "config", "message": str(err)}
        ) from err
    return RunResponse(files=output.files, summary=output.summary)


@app.get("/api/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/api/simulate")
def simulate(config: ExperimentConfig) -> RunResponse:
    return _execute("simulate", config)


@app.post("/api/shapley")
def shapley(config: ExperimentConfig) -> RunResponse:
    return _execute("shapley", config)


@app.post("/api/removal")
def removal(config: ExperimentConfig) -> RunResponse:
    return _execute("removal", config)


@app.post("/api/correlation")
def correlation(config: ExperimentConfig) -> RunResponse:
    return _execute("correlation", config)


@app.post("/api/dishonest")
def dishonest(config: ExperimentConfig) -> RunResponse:
    return _execute("dishonest", config)
