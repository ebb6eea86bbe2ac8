"""HTTP/JSON review service.

Serves candidate crops with overlay geometry, records inspector verdicts
and missed marks into append-only session logs, and reports inspection
metrics. All errors are JSON objects {"error": {"code", "message"}} with a
machine-readable code; writes to one session are single-writer (concurrent
writers get a 409 conflict).
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from fastapi import FastAPI, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from ..errors import FormatError, PvmapError
from ..installations import Installation, load_installations
from ..metrics import Verdict, inspection_score, prf_dict
from ..raster import Raster, load_raster
from ..vector import load_regions, point_in_polygon
from .crops import render_crop
from .store import ConflictError, SessionRuleError, SessionState, SessionStore

_STATUS = {
    "unknown_session": 404,
    "unknown_candidate": 404,
    "out_of_range": 404,
    "closed_session": 409,
    "double_verdict": 409,
    "nothing_to_amend": 409,
    "conflict": 409,
    "undecided": 409,
    "unknown_tile": 409,
    "bad_label": 400,
    "bad_mode": 400,
    "bad_geometry": 400,
    "bad_request": 400,
    "unknown_region": 400,
    "missing_predictions": 400,
    "bad_predictions": 400,
}


def _err(code: str, message: str) -> JSONResponse:
    return JSONResponse(
        {"error": {"code": code, "message": message}},
        status_code=_STATUS.get(code, 400),
    )


class SessionCreate(BaseModel):
    bundle: str | None = None
    region: str | None = None
    predictions: str | None = None
    tiles: list[dict] | None = None
    crop_padding_m: float | None = None


class VerdictIn(BaseModel):
    candidate_id: int
    label: str
    note: str = ""
    amend: bool = False


class MissedIn(BaseModel):
    point: list[float] | None = None
    outline: list[list[float]] | None = None
    mode: str = "queue"
    note: str = ""


def _live_metrics(state: SessionState) -> dict:
    verdicts = [Verdict(str(c), v["label"]) for c, v in state.verdicts.items()]
    verdicts += [Verdict(m["id"], "missed") for m in state.missed]
    if not verdicts:
        return prf_dict(inspection_score([]))
    return prf_dict(inspection_score(verdicts))


def _session_json(state: SessionState) -> dict:
    undecided = state.undecided
    return {
        "id": state.id,
        "region": state.region,
        "status": state.status,
        "candidates": state.candidates,
        "candidate_count": len(state.candidates),
        "empty": len(state.candidates) == 0,
        "verdicts": {str(c): v for c, v in sorted(state.verdicts.items())},
        "missed": state.missed,
        "amend_log": state.amend_log,
        "tally": state.tally(),
        "live_metrics": _live_metrics(state),
        "next_undecided": state.candidates.index(undecided[0]) if undecided else None,
        "created_at": state.created_at,
        "updated_at": state.updated_at,
    }


def create_app(store_dir, regions_path=None) -> FastAPI:
    store = SessionStore(store_dir)
    known_regions = None
    if regions_path is not None:
        known_regions = {r.name for r in load_regions(regions_path)}

    app = FastAPI(title="pvmap review service")
    predictions_cache: dict[str, dict[int, Installation]] = {}
    raster_cache: dict[str, Raster] = {}

    @app.exception_handler(RequestValidationError)
    def _invalid(request, exc):
        return _err("bad_request", str(exc.errors()))

    @app.exception_handler(SessionRuleError)
    def _rule(request, exc: SessionRuleError):
        return _err(exc.code, str(exc))

    @app.exception_handler(ConflictError)
    def _conflict(request, exc):
        return _err("conflict", str(exc))

    def _installations(state: SessionState) -> dict[int, Installation]:
        path = state.predictions_path
        if path not in predictions_cache:
            predictions_cache[path] = {i.id: i for i in load_installations(path)}
        return predictions_cache[path]

    def _tile(state: SessionState, tile_id: str) -> Raster:
        if tile_id not in state.tiles:
            raise SessionRuleError(
                "unknown_tile", f"tile {tile_id!r} is not part of session {state.id}"
            )
        path = state.tiles[tile_id]
        if path not in raster_cache:
            raster_cache[path] = load_raster(path)
        return raster_cache[path]

    def _candidate(state: SessionState, index: int):
        if state.status != "open":
            raise SessionRuleError("closed_session", f"session {state.id} is closed")
        if not 0 <= index < len(state.candidates):
            raise SessionRuleError(
                "out_of_range",
                f"candidate index {index} out of range [0, {len(state.candidates)})",
            )
        cid = state.candidates[index]
        insts = _installations(state)
        inst = insts[cid]
        return cid, inst

    @app.post("/sessions", status_code=201)
    def create_session(body: SessionCreate):
        region = body.region
        predictions = body.predictions
        tiles = {t["tile_id"]: t["path"] for t in body.tiles} if body.tiles else {}
        padding = body.crop_padding_m
        if body.bundle is not None:
            bundle_path = Path(body.bundle)
            if not bundle_path.exists():
                return _err("bad_request", f"bundle not found: {bundle_path}")
            bundle = json.loads(bundle_path.read_text())
            region = bundle["region"]
            predictions = str((bundle_path.parent / bundle["predictions"]).resolve())
            tiles = {t["tile_id"]: t["path"] for t in bundle.get("tiles", [])}
            if padding is None:
                padding = bundle.get("crop_padding_m")
        if region is None or predictions is None:
            return _err("bad_request", "need either a bundle or region + predictions")
        if known_regions is not None and region not in known_regions:
            return _err("unknown_region", f"region {region!r} is not configured")
        if not Path(predictions).exists():
            return _err("missing_predictions", f"predictions file not found: {predictions}")
        try:
            state = store.create(
                region, predictions, tiles,
                crop_padding_m=20.0 if padding is None else float(padding),
            )
        except FormatError as exc:
            return _err("bad_predictions", str(exc))
        return _session_json(state)

    @app.get("/sessions")
    def list_sessions():
        return {
            "sessions": [
                {
                    "id": s.id,
                    "region": s.region,
                    "status": s.status,
                    "candidate_count": len(s.candidates),
                    "tally": s.tally(),
                }
                for s in (store.get(i) for i in store.ids())
            ]
        }

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return _session_json(store.get(session_id))

    @app.get("/sessions/{session_id}/candidates/{index}")
    def get_candidate(session_id: str, index: int):
        state = store.get(session_id)
        cid, inst = _candidate(state, index)
        tile = _tile(state, inst.tile_id)
        crop = render_crop(inst, tile, state.crop_padding_m)
        return {
            "index": index,
            "installation_id": cid,
            "tile_id": inst.tile_id,
            "pixel_count": inst.pixel_count,
            "area_m2": inst.area_m2,
            "centroid_world": list(inst.centroid),
            "verdict": state.verdicts.get(cid),
            "crop_url": f"/crops/{session_id}/{index}.png",
            "crop": {
                "width": crop.width,
                "height": crop.height,
                "col0": crop.col0,
                "row0": crop.row0,
                "centroid_px": list(crop.centroid_px),
                "geo": crop.geo,
            },
            "overlay": {"parts": list(crop.overlay_parts)},
        }

    @app.get("/crops/{session_id}/{index}.png")
    def get_crop(session_id: str, index: int):
        state = store.get(session_id)
        _, inst = _candidate(state, index)
        tile = _tile(state, inst.tile_id)
        crop = render_crop(inst, tile, state.crop_padding_m)
        return Response(content=crop.png, media_type="image/png")

    @app.post("/sessions/{session_id}/verdicts")
    def post_verdict(session_id: str, body: VerdictIn):
        state = store.post_verdict(
            session_id, body.candidate_id, body.label, note=body.note, amend=body.amend
        )
        return _session_json(state)

    @app.post("/sessions/{session_id}/missed")
    def post_missed(session_id: str, body: MissedIn):
        state = store.get(session_id)
        probe = None
        if body.point is not None:
            probe = (body.point[0], body.point[1])
        elif body.outline:
            probe = (body.outline[0][0], body.outline[0][1])
        overlapping = []
        if probe is not None:
            for cid, inst in sorted(_installations(state).items()):
                if any(point_in_polygon(probe, part) for part in inst.outline_parts):
                    overlapping.append(cid)
        state = store.add_missed(
            session_id, point=body.point, outline=body.outline,
            mode=body.mode, note=body.note,
        )
        payload = _session_json(state)
        if overlapping:
            payload["warning"] = {
                "code": "possible_duplicate",
                "message": "missed mark falls inside existing candidate outline(s)",
                "overlapping_candidates": overlapping,
            }
        return payload

    @app.post("/sessions/{session_id}/close")
    def close_session(session_id: str):
        return _session_json(store.close(session_id))

    @app.get("/sessions/{session_id}/metrics")
    def session_metrics(session_id: str):
        state = store.get(session_id)
        undecided = state.undecided
        if undecided:
            return _err(
                "undecided",
                f"{len(undecided)} candidate(s) still lack a verdict: {undecided[:10]}",
            )
        verdicts = [Verdict(str(c), v["label"]) for c, v in state.verdicts.items()]
        verdicts += [Verdict(m["id"], "missed") for m in state.missed]
        score = inspection_score(verdicts)
        return {
            "session": state.id,
            "region": state.region,
            "metrics": prf_dict(score),
            "counts": state.tally(),
        }

    return app


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pvmap-review", description=__doc__)
    parser.add_argument("--store", required=True, help="session store directory")
    parser.add_argument("--regions", help="regions NDJSON restricting session regions")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8008)
    args = parser.parse_args(argv)
    import uvicorn

    uvicorn.run(create_app(args.store, args.regions), host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
