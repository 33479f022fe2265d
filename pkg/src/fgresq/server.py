"""HTTP front for the annotation campaign.

Bearer tokens map to annotator profiles; every endpoint is
profile-scoped. Paths are stable API surface: GET /session,
GET /pairs/next, GET /images/{id}, POST /preferences,
GET /pairs/{id}/status, POST /resolutions, GET /export.
"""

from __future__ import annotations

import mimetypes
from pathlib import Path
from typing import Callable

from fastapi import Depends, FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .annotation import AnnotationCampaign
from .datamodel import DatasetManifest
from .errors import (
    DuplicateSubmissionError,
    InvalidStateError,
    NotAssignedError,
    NotAuthorizedError,
    UnknownPairError,
)

ImageProvider = Callable[[str], tuple[bytes, str]]


class PreferenceIn(BaseModel):
    pair_id: str
    choice: str
    round: int | None = None


class ResolutionIn(BaseModel):
    pair_id: str
    final_choice: str
    rationale: str = ""


def file_image_provider(manifest: DatasetManifest, root) -> ImageProvider:
    """Serve image bytes from manifest paths under `root`."""
    base = Path(root)
    paths = {im.image_id: base / im.path for im in manifest.images}

    def provide(image_id: str) -> tuple[bytes, str]:
        path = paths[image_id]
        media_type = mimetypes.guess_type(path.name)[0] or "application/octet-stream"
        return path.read_bytes(), media_type

    return provide


def create_app(
    campaign: AnnotationCampaign,
    image_provider: ImageProvider,
    tokens: dict[str, str],
) -> FastAPI:
    """Build the service; `tokens` maps bearer token → annotator_id."""
    app = FastAPI(title="pairwise annotation service")
    # the annotation UI is a static page on another origin; auth is an
    # explicit bearer header (no cookies), so open CORS adds no ambient
    # credential exposure
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["Authorization", "Content-Type"],
    )

    def authenticate(request: Request) -> str:
        header = request.headers.get("authorization", "")
        if not header.startswith("Bearer "):
            raise HTTPException(status_code=401, detail="missing bearer token")
        annotator_id = tokens.get(header.removeprefix("Bearer ").strip())
        if annotator_id is None or annotator_id not in campaign.profiles:
            raise HTTPException(status_code=401, detail="unknown token")
        return annotator_id

    def _pair_payload(pair_id: str) -> dict:
        pair = campaign.pairs_by_id[pair_id]
        return {"pair_id": pair_id, "image_a": pair.image_a, "image_b": pair.image_b}

    @app.get("/session")
    def session(annotator_id: str = Depends(authenticate)):
        profile = campaign.profiles[annotator_id]
        return {
            "annotator_id": profile.annotator_id,
            "group": profile.group,
            "role": profile.role,
        }

    @app.get("/pairs/next")
    def next_pair(annotator_id: str = Depends(authenticate)):
        profile = campaign.profiles[annotator_id]
        pair_id = campaign.next_pair_for(annotator_id)
        remaining = campaign.remaining_for(annotator_id)
        if pair_id is None:
            return {"pair_id": None, "remaining": remaining}
        payload = _pair_payload(pair_id)
        payload["remaining"] = remaining
        payload["round"] = campaign.active_round(pair_id)
        if profile.role == "expert":
            payload["votes"] = campaign.status(pair_id).votes
        return payload

    @app.get("/images/{image_id}")
    def image(image_id: str, annotator_id: str = Depends(authenticate)):
        try:
            data, media_type = image_provider(image_id)
        except (KeyError, OSError):
            raise HTTPException(status_code=404, detail=f"no image {image_id!r}")
        return Response(content=data, media_type=media_type)

    @app.post("/preferences")
    def submit_preference(
        body: PreferenceIn, annotator_id: str = Depends(authenticate)
    ):
        try:
            record = campaign.submit(
                annotator_id, body.pair_id, body.choice, body.round
            )
        except UnknownPairError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except (NotAssignedError, NotAuthorizedError) as exc:
            raise HTTPException(status_code=403, detail=str(exc))
        except DuplicateSubmissionError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except (InvalidStateError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {
            "status": "stored",
            "pair_id": record.pair_id,
            "annotator_id": record.annotator_id,
            "choice": record.choice,
            "round": record.round,
        }

    @app.get("/pairs/{pair_id}/status")
    def pair_status(pair_id: str, annotator_id: str = Depends(authenticate)):
        try:
            status = campaign.status(pair_id)
        except UnknownPairError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return {
            "pair_id": status.pair_id,
            "state": status.state,
            "votes": status.votes,
            "final_choice": status.final_choice,
        }

    @app.post("/resolutions")
    def submit_resolution(
        body: ResolutionIn, annotator_id: str = Depends(authenticate)
    ):
        try:
            record = campaign.resolve(
                annotator_id, body.pair_id, body.final_choice, body.rationale
            )
        except UnknownPairError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except NotAuthorizedError as exc:
            raise HTTPException(status_code=403, detail=str(exc))
        except DuplicateSubmissionError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except InvalidStateError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {
            "status": "resolved",
            "pair_id": record.pair_id,
            "final_choice": record.final_choice,
        }

    @app.get("/export")
    def export(annotator_id: str = Depends(authenticate)):
        manifest = DatasetManifest(
            images=[], pairs=list(campaign.pairs_by_id.values()), scenes=[]
        )
        _, dump = campaign.export(manifest)
        return dump

    return app
