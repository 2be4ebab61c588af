"""HTTP service exposing the simulator: scenario runs, single-controller step
studies, and the controllability analysis. All responses carry the CSV
payloads so clients stay stateless and outputs byte-deterministic.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .analysis import (
    DEFAULT_OMEGA_GRID,
    ScalingSet,
    controllability_report,
    sweep_csv,
)
from .plant import LinearModel
from .scenario import ScenarioError, parse_scenario, run_scenario
from .selector import SwitchingConfigError
from .studies import run_step_study


class SimulateRequest(BaseModel):
    scenario: str = Field(description="Scenario file text (INI sections)")
    files: dict[str, str] = Field(default_factory=dict,
                                  description="Referenced file contents by name")
    seed: int | None = Field(default=None, description="Disturbance seed override")


class RunSummary(BaseModel):
    samples: int
    horizons: int
    sse_v: float
    sse_rho: float
    sse_total_weighted: float
    max_du_qi: float
    max_du_qw: float
    switch_count: int
    final_active_id: int


class SimulateResponse(BaseModel):
    trace_csv: str
    horizon_csv: str
    profile_csv: str
    summary: RunSummary
    summary_text: str


class StepStudyRequest(BaseModel):
    controller_id: int = Field(ge=0, le=3)
    step: float = Field(description="Feed-density step size, t/m^3")
    qw_gain: float = Field(default=1.0, gt=0)
    qi_gain: float = Field(default=1.0, gt=0)
    duration_hours: float = Field(default=1.0, gt=0)
    dt: float = Field(default=0.002, gt=0)
    step_time_hours: float = Field(default=0.1, ge=0)


class StepStudySummary(BaseModel):
    step_time_hours: float
    settling_time_hours: float | None
    ss_error_v: float
    ss_error_rho: float


class StepStudyResponse(BaseModel):
    response_csv: str
    summary: StepStudySummary
    summary_text: str


class SystemMatrices(BaseModel):
    """Continuous LTI model (A, B, Gd; C defaults to identity)."""

    a: list[list[float]]
    b: list[list[float]]
    gd: list[list[float]]
    c: list[list[float]] | None = None


class AnalyzeRequest(BaseModel):
    system: SystemMatrices | None = Field(
        default=None, description="Model to analyse; omit for the built-in tank")
    d_y: list[float] | None = None
    d_u: list[float] | None = None
    d_d: list[float] | None = None
    omega_min: float = Field(default=0.1, gt=0)
    omega_max: float = Field(default=1e4, gt=0)
    omega_points: int = Field(default=200, ge=2, le=20000)


class AnalysisSummary(BaseModel):
    controllability_rank: int
    observability_rank: int
    poles: list[list[float]]  # [re, im] pairs
    zeros: list[list[float]]
    rga_steady: list[list[float]]
    rejection_index_max: list[float]
    rejection_crossing: float | None


class AnalyzeResponse(BaseModel):
    report: str
    plant_sweep_csv: str
    disturbance_sweep_csv: str
    rejection_csv: str
    summary: AnalysisSummary


app = FastAPI(
    title="surgebench",
    version=__version__,
    description="Surge-tank control platform simulator: competing controllers, "
                "supervisory switching, and input/output controllability analysis.",
)


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/simulate", response_model=SimulateResponse)
def simulate(request: SimulateRequest) -> SimulateResponse:
    try:
        sc = parse_scenario(request.scenario, files=request.files,
                            seed_override=request.seed)
        trace = run_scenario(sc)
    except (ScenarioError, SwitchingConfigError, ValueError) as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    return SimulateResponse(
        trace_csv=trace.to_trace_csv(),
        horizon_csv=trace.to_horizon_csv(),
        profile_csv=sc.profile.to_csv(),
        summary=RunSummary(**trace.summary_dict()),
        summary_text=trace.summary_text(),
    )


@app.post("/step-study", response_model=StepStudyResponse)
def step_study(request: StepStudyRequest) -> StepStudyResponse:
    try:
        result = run_step_study(
            request.controller_id, request.step,
            qw_gain=request.qw_gain, qi_gain=request.qi_gain,
            duration=request.duration_hours, dt=request.dt,
            step_time=request.step_time_hours,
        )
    except (KeyError, ValueError) as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    return StepStudyResponse(
        response_csv=result.trace.to_trace_csv(),
        summary=StepStudySummary(**result.summary_dict()),
        summary_text=result.summary_text(),
    )


@app.post("/analyze", response_model=AnalyzeResponse)
def analyze(request: AnalyzeRequest) -> AnalyzeResponse:
    try:
        model = None
        if request.system is not None:
            a = np.asarray(request.system.a, dtype=float)
            c = np.asarray(request.system.c, dtype=float) if request.system.c \
                else np.eye(a.shape[0])
            model = LinearModel(
                a=a,
                b=np.asarray(request.system.b, dtype=float),
                gd=np.asarray(request.system.gd, dtype=float),
                c=c,
            )
        scaling = ScalingSet(
            d_y=np.asarray(request.d_y, dtype=float) if request.d_y else ScalingSet().d_y,
            d_u=np.asarray(request.d_u, dtype=float) if request.d_u else ScalingSet().d_u,
            d_d=np.asarray(request.d_d, dtype=float) if request.d_d else ScalingSet().d_d,
        )
        omegas = np.logspace(np.log10(request.omega_min), np.log10(request.omega_max),
                             request.omega_points)
        if request.omega_points == len(DEFAULT_OMEGA_GRID) and \
                request.omega_min == 0.1 and request.omega_max == 1e4:
            omegas = DEFAULT_OMEGA_GRID
        report = controllability_report(model, scaling, omegas)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    rejection = np.nan_to_num(report.rejection_index, nan=-1.0)
    return AnalyzeResponse(
        report=report.to_text(),
        plant_sweep_csv=sweep_csv(report.omegas, report.plant_sweep),
        disturbance_sweep_csv=sweep_csv(report.omegas, report.disturbance_sweep),
        rejection_csv=sweep_csv(report.omegas, rejection),
        summary=AnalysisSummary(
            controllability_rank=report.controllability_rank,
            observability_rank=report.observability_rank,
            poles=[[float(p.real), float(p.imag)] for p in report.poles],
            zeros=[[float(z.real), float(z.imag)] for z in report.zeros],
            rga_steady=[[float(x.real) for x in row] for row in report.rga_steady],
            rejection_index_max=[float(x) for x in np.nanmax(report.rejection_index, axis=0)],
            rejection_crossing=report.rejection_crossing,
        ),
    )
