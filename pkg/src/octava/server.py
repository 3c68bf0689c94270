"""Session-oriented HTTP service for interactive analysis and curation.

Each session is one directory on disk: the uploaded image, the current
configuration, the curation edit log, and the cached artifact files.
Nothing lives only in memory, so a restarted server answers every request
exactly as before; in-memory pipeline state is rebuilt on demand by
re-running the deterministic pipeline and replaying the edit log.

Parameter changes invalidate curation: every analyze bumps the epoch and
clears the log, and curation requests must quote the epoch they were
issued against (stale quotes are rejected with 409 rather than silently
remapped onto a different network).
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import threading
import uuid
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Form, HTTPException, Request, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response

from . import pipeline, render
from .enhance import frangi_vesselness, median_filter
from .imagecore import Calibration, GrayImage, load_image
from .metrics import compute_report
from .pipeline import AnalysisConfig, PipelineError, StageOutputs
from .segment import binarize
from .topology import CurationEdit, VesselNetwork, apply_curation

ARTIFACT_NAMES = (
    "overlay",
    "thickness",
    "histograms",
    "original",
    "vesselness",
    "mask",
    "geometry",
)

_PNG_ARTIFACTS = {
    "overlay": "overlay.png",
    "thickness": "thickness.png",
    "original": "original.png",
    "vesselness": "vesselness.png",
    "mask": "mask.png",
}
_JSON_ARTIFACTS = {
    "histograms": "histograms.json",
    "geometry": "geometry.json",
}


def _gray_png(img: GrayImage) -> bytes:
    data = np.round(img.pixels * 255.0).astype(np.uint8)
    return render.png_bytes(np.repeat(data[:, :, None], 3, axis=2))


def _mask_png(bits: np.ndarray) -> bytes:
    data = np.where(bits, 255, 0).astype(np.uint8)
    return render.png_bytes(np.repeat(data[:, :, None], 3, axis=2))


def _zip_bytes(files: dict[str, bytes]) -> bytes:
    """Deterministic zip: fixed entry timestamps, sorted names."""
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as z:
        for name in sorted(files):
            info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
            info.external_attr = 0o644 << 16
            z.writestr(info, files[name])
    return buf.getvalue()


@dataclass
class SessionRuntime:
    """In-memory half of a session; everything here is reproducible from
    the directory contents."""

    outputs: StageOutputs | None = None
    current: VesselNetwork | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionStore:
    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._runtimes: dict[str, SessionRuntime] = {}
        self._registry_lock = threading.Lock()

    def dir(self, sid: str) -> Path:
        return self.root / sid

    def runtime(self, sid: str) -> SessionRuntime:
        with self._registry_lock:
            if sid not in self._runtimes:
                self._runtimes[sid] = SessionRuntime()
            return self._runtimes[sid]

    def meta(self, sid: str) -> dict:
        path = self.dir(sid) / "meta.json"
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"no session {sid}")
        return json.loads(path.read_text())

    def write_meta(self, sid: str, meta: dict) -> None:
        (self.dir(sid) / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")

    def create(self, filename: str, data: bytes, pixel_size_um: float) -> str:
        sid = uuid.uuid4().hex
        d = self.dir(sid)
        d.mkdir()
        suffix = Path(filename).suffix.lower() or ".png"
        source = d / f"source{suffix}"
        source.write_bytes(data)
        try:
            load_image(source, Calibration(pixel_size_um=pixel_size_um))
        except Exception as exc:
            source.unlink()
            d.rmdir()
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        meta = {
            "id": sid,
            "filename": filename,
            "source_name": source.name,
            "pixel_size_um": pixel_size_um,
            "epoch": 0,
            "edit_seq": 0,
            "analyzed": False,
            "config": None,
            "edits": [],
        }
        self.write_meta(sid, meta)
        return sid

    def load_source(self, sid: str, meta: dict, cfg: AnalysisConfig | None = None) -> GrayImage:
        ps = meta["pixel_size_um"]
        axial = None
        if cfg is not None:
            if cfg.pixel_size_um is not None:
                ps = cfg.pixel_size_um
            axial = cfg.axial_span_um
        path = self.dir(sid) / meta["source_name"]
        return load_image(path, Calibration(pixel_size_um=ps, axial_span_um=axial))

    def source_sha256(self, sid: str, meta: dict) -> str:
        path = self.dir(sid) / meta["source_name"]
        return hashlib.sha256(path.read_bytes()).hexdigest()

    def config(self, meta: dict) -> AnalysisConfig:
        if meta["config"] is None:
            raise HTTPException(status_code=409, detail="session has no analysis yet")
        return AnalysisConfig.from_dict(meta["config"])

    def ensure_outputs(self, sid: str, meta: dict) -> SessionRuntime:
        """Rebuild pipeline state after a restart by re-running the
        persisted config and replaying the edit log."""
        rt = self.runtime(sid)
        if rt.outputs is None:
            cfg = self.config(meta)
            image = self.load_source(sid, meta, cfg)
            rt.outputs = pipeline.execute(image, cfg)
            edits = [CurationEdit(a, i) for a, i in meta["edits"]]
            rt.current = apply_curation(rt.outputs.network, edits)
        return rt


def _cache_key(meta: dict) -> str:
    cfg = meta.get("config")
    h = "none"
    if cfg is not None:
        h = AnalysisConfig.from_dict(cfg).config_hash()[:16]
    return f"{h}-{meta['epoch']}-{meta['edit_seq']}"


def _artifact_urls(sid: str, meta: dict) -> dict[str, str]:
    v = _cache_key(meta)
    return {name: f"/api/sessions/{sid}/artifacts/{name}?v={v}" for name in ARTIFACT_NAMES}


def _current_report(store: SessionStore, sid: str, which: str) -> dict:
    path = store.dir(sid) / "artifacts" / which
    return json.loads(path.read_text())


def _write_artifacts(store: SessionStore, sid: str, meta: dict, rt: SessionRuntime) -> None:
    """Regenerate every cached artifact from the runtime state."""
    cfg = store.config(meta)
    out = rt.outputs
    net = rt.current
    edits = meta["edits"]
    params = pipeline.report_parameters(cfg, out.twig_size_um, curation_edits=len(edits))
    report = compute_report(out.mask, out.skeleton, net, parameters=params,
                            fd_on_mask=cfg.fd_on_mask)
    sha = store.source_sha256(sid, meta)

    d = store.dir(sid) / "artifacts"
    d.mkdir(exist_ok=True)
    files = pipeline.render_artifact_files(out, net, report, cfg, out.warnings, sha)
    for name, data in files.items():
        (d / name).write_bytes(data)
    (d / "report_auto.json").write_bytes(
        pipeline.json_bytes(pipeline.report_payload(cfg, out.report, out.warnings, sha))
    )
    (d / "original.png").write_bytes(_gray_png(out.image))
    (d / "vesselness.png").write_bytes(_gray_png(out.enhanced))
    (d / "mask.png").write_bytes(_mask_png(out.mask.bits))
    histograms = {
        "auto": out.report.as_dict()["histograms"],
        "current": report.as_dict()["histograms"],
    }
    (d / "histograms.json").write_bytes(pipeline.json_bytes(histograms))


def create_app(sessions_root: Path | str = "octava-sessions") -> FastAPI:
    app = FastAPI(title="octava curation service")
    # the browser frontend is served from a separate static origin
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    store = SessionStore(Path(sessions_root))
    app.state.store = store

    @app.post("/api/sessions", status_code=201)
    async def create_session(file: UploadFile, pixel_size_um: float = Form(...)):
        if pixel_size_um <= 0:
            raise HTTPException(status_code=400, detail="pixel_size_um must be > 0")
        data = await file.read()
        sid = store.create(file.filename or "upload.png", data, pixel_size_um)
        return {"id": sid}

    @app.get("/api/sessions/{sid}")
    def get_session(sid: str):
        meta = store.meta(sid)
        body = {
            "id": meta["id"],
            "filename": meta["filename"],
            "pixel_size_um": meta["pixel_size_um"],
            "epoch": meta["epoch"],
            "edit_seq": meta["edit_seq"],
            "analyzed": meta["analyzed"],
            "config": meta["config"],
            "config_hash": None,
            "edits": [{"action": a, "element_id": i} for a, i in meta["edits"]],
            "report": None,
            "auto_report": None,
            "artifacts": None,
        }
        if meta["analyzed"]:
            body["config_hash"] = store.config(meta).config_hash()
            body["report"] = _current_report(store, sid, "report.json")
            body["auto_report"] = _current_report(store, sid, "report_auto.json")
            body["artifacts"] = _artifact_urls(sid, meta)
        return body

    @app.post("/api/sessions/{sid}/analyze")
    async def analyze(sid: str, request: Request):
        meta = store.meta(sid)
        overrides = await _json_body(request)
        rt = store.runtime(sid)
        if not rt.lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="analysis already in flight")
        try:
            base = (
                AnalysisConfig.from_dict(meta["config"])
                if meta["config"] is not None
                else AnalysisConfig(pixel_size_um=meta["pixel_size_um"])
            )
            try:
                cfg = base.merged(overrides)
            except (ValueError, TypeError) as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
            image = store.load_source(sid, meta, cfg)
            try:
                rt.outputs = pipeline.execute(image, cfg)
            except PipelineError as exc:
                raise HTTPException(
                    status_code=422, detail={"stage": exc.stage, "message": exc.message}
                ) from exc
            rt.current = rt.outputs.network
            meta["config"] = cfg.processing_dict()
            meta["epoch"] += 1
            meta["edit_seq"] = 0
            meta["edits"] = []
            meta["analyzed"] = True
            _write_artifacts(store, sid, meta, rt)
            store.write_meta(sid, meta)
        finally:
            rt.lock.release()
        return {
            "epoch": meta["epoch"],
            "config_hash": cfg.config_hash(),
            "config": cfg.processing_dict(),
            "report": _current_report(store, sid, "report.json"),
            "artifacts": _artifact_urls(sid, meta),
        }

    @app.post("/api/sessions/{sid}/curation")
    async def curate(sid: str, request: Request):
        meta = store.meta(sid)
        body = await _json_body(request)
        if not meta["analyzed"]:
            raise HTTPException(status_code=409, detail="session has no analysis yet")
        if body.get("epoch") != meta["epoch"]:
            raise HTTPException(
                status_code=409,
                detail=f"stale epoch {body.get('epoch')}; current is {meta['epoch']}",
            )
        raw = body.get("edits", [])
        try:
            edits = [CurationEdit(e["action"], int(e["element_id"])) for e in raw]
        except (KeyError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=f"bad edit list: {exc}") from exc
        rt = store.runtime(sid)
        if not rt.lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="analysis already in flight")
        try:
            rt = store.ensure_outputs(sid, meta)
            log = [CurationEdit(a, i) for a, i in meta["edits"]] + edits
            try:
                rt.current = apply_curation(rt.outputs.network, log)
            except KeyError as exc:
                raise HTTPException(
                    status_code=409, detail=f"unknown element in current network: {exc}"
                ) from exc
            meta["edits"] = [[e.action, e.element_id] for e in log]
            meta["edit_seq"] += 1
            _write_artifacts(store, sid, meta, rt)
            store.write_meta(sid, meta)
        finally:
            rt.lock.release()
        hist = json.loads((store.dir(sid) / "artifacts" / "histograms.json").read_text())
        return {
            "epoch": meta["epoch"],
            "edit_seq": meta["edit_seq"],
            "edit_count": len(meta["edits"]),
            "report": _current_report(store, sid, "report.json"),
            "auto_histograms": hist["auto"],
            "artifacts": _artifact_urls(sid, meta),
        }

    @app.get("/api/sessions/{sid}/artifacts/{name}")
    def artifact(sid: str, name: str):
        meta = store.meta(sid)
        if name not in ARTIFACT_NAMES:
            raise HTTPException(status_code=404, detail=f"unknown artifact {name!r}")
        if not meta["analyzed"]:
            raise HTTPException(status_code=409, detail="session has no analysis yet")
        etag = f'"{_cache_key(meta)}"'
        if name in _JSON_ARTIFACTS:
            path = store.dir(sid) / "artifacts" / _JSON_ARTIFACTS[name]
            return JSONResponse(json.loads(path.read_text()), headers={"ETag": etag})
        path = store.dir(sid) / "artifacts" / _PNG_ARTIFACTS[name]
        return Response(path.read_bytes(), media_type="image/png", headers={"ETag": etag})

    @app.get("/api/sessions/{sid}/export")
    def export(sid: str):
        meta = store.meta(sid)
        if not meta["analyzed"]:
            raise HTTPException(status_code=409, detail="session has no analysis yet")
        d = store.dir(sid) / "artifacts"
        names = (
            "report.json",
            "geometry.json",
            "segments.csv",
            "overlay.png",
            "thickness.png",
            "histograms.png",
        )
        files = {n: (d / n).read_bytes() for n in names}
        data = _zip_bytes(files)
        return Response(
            data,
            media_type="application/zip",
            headers={"Content-Disposition": f'attachment; filename="octava-{sid[:8]}.zip"'},
        )

    @app.post("/api/sessions/{sid}/preview")
    async def preview(sid: str, request: Request):
        """Side-by-side scale-sweep previews: for each requested sigma_max
        the mask and (optionally) a vesselness line profile, without
        touching session state."""
        meta = store.meta(sid)
        body = await _json_body(request)
        sigmas = body.get("sigma_max_values") or []
        if not sigmas:
            raise HTTPException(status_code=422, detail="sigma_max_values must be non-empty")
        profile = body.get("profile")
        base = (
            AnalysisConfig.from_dict(meta["config"])
            if meta["config"] is not None
            else AnalysisConfig(pixel_size_um=meta["pixel_size_um"])
        )
        image = store.load_source(sid, meta, base)
        previews = []
        for s in sigmas:
            try:
                cfg = base.merged({"frangi": {"sigma_max": float(s)}})
                pre = median_filter(image, cfg.median_kernel)
                enhanced = frangi_vesselness(pre, cfg.frangi)
                mask = binarize(enhanced, cfg.method)
            except (ValueError, TypeError) as exc:
                raise HTTPException(status_code=422, detail=f"sigma_max {s}: {exc}") from exc
            entry = {
                "sigma_max": float(s),
                "mask_sha256": hashlib.sha256(mask.bits.tobytes()).hexdigest(),
                "mask_png": base64.b64encode(_mask_png(mask.bits)).decode(),
            }
            if profile is not None:
                entry["profile"] = _line_profile(enhanced.pixels, profile)
            previews.append(entry)
        out = {"previews": previews}
        if profile is not None:
            out["source_profile"] = _line_profile(image.pixels, profile)
        return out

    return app


async def _json_body(request: Request) -> dict:
    raw = await request.body()
    if not raw:
        return {}
    try:
        body = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise HTTPException(status_code=422, detail=f"body is not valid JSON: {exc}") from exc
    if not isinstance(body, dict):
        raise HTTPException(status_code=422, detail="body must be a JSON object")
    return body


def _line_profile(pixels: np.ndarray, spec: dict) -> list[float]:
    """Bilinear samples along a user-drawn line, one per pixel of length."""
    try:
        y0, x0, y1, x1 = (float(spec[k]) for k in ("y0", "x0", "y1", "x1"))
    except (KeyError, TypeError, ValueError) as exc:
        raise HTTPException(status_code=422, detail=f"bad profile spec: {exc}") from exc
    h, w = pixels.shape
    for y, x in ((y0, x0), (y1, x1)):
        if not (0 <= y <= h - 1 and 0 <= x <= w - 1):
            raise HTTPException(status_code=422, detail="profile endpoints outside the image")
    n = max(int(np.ceil(np.hypot(y1 - y0, x1 - x0))), 1) + 1
    ys = np.linspace(y0, y1, n)
    xs = np.linspace(x0, x1, n)
    iy = np.clip(np.floor(ys).astype(int), 0, h - 2) if h > 1 else np.zeros(n, dtype=int)
    ix = np.clip(np.floor(xs).astype(int), 0, w - 2) if w > 1 else np.zeros(n, dtype=int)
    fy = ys - iy
    fx = xs - ix
    vals = (
        pixels[iy, ix] * (1 - fy) * (1 - fx)
        + pixels[iy, ix + 1] * (1 - fy) * fx
        + pixels[iy + 1, ix] * fy * (1 - fx)
        + pixels[iy + 1, ix + 1] * fy * fx
    )
    return [float(v) for v in vals]
