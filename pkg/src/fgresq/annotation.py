"""Two-round pairwise annotation protocol.

Round one: every pair is voted on by all annotators of its group.
Round two: pairs with any disagreement go to an expert, whose decision
is final (an optional re-vote round can be enabled before expert
review). Every submission is appended to a durable log before it is
acknowledged, so the full campaign replays losslessly after a restart.
"""

from __future__ import annotations

import json
import os
import random
import threading
import time
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .datamodel import DatasetManifest, PairRecord
from .errors import (
    DuplicateSubmissionError,
    InvalidStateError,
    NotAssignedError,
    NotAuthorizedError,
    UnknownPairError,
)

CHOICES = ("A", "B", "equal")


@dataclass
class AnnotatorProfile:
    annotator_id: str
    group: int | None  # 1 or 2 for annotators; None for experts
    role: str  # "annotator" | "expert"

    def validate(self):
        if self.role not in ("annotator", "expert"):
            raise ValueError(f"unknown role {self.role!r}")
        if self.role == "annotator" and self.group not in (1, 2):
            raise ValueError(f"annotator {self.annotator_id} needs group 1 or 2")
        if self.role == "expert" and self.group is not None:
            raise ValueError(f"expert {self.annotator_id} must not carry a group")


@dataclass
class PreferenceRecord:
    pair_id: str
    annotator_id: str
    choice: str
    round: int
    timestamp: float


@dataclass
class ResolutionRecord:
    pair_id: str
    expert_id: str
    final_choice: str
    rationale: str


@dataclass
class Assignment:
    """Which group each pair belongs to, and who sits in each group."""

    pair_group: dict[str, int]
    group_members: dict[int, list[str]]
    seed: int

    def annotators_for(self, pair_id: str) -> list[str]:
        if pair_id not in self.pair_group:
            raise UnknownPairError(f"pair {pair_id!r} is not part of the campaign")
        return self.group_members[self.pair_group[pair_id]]

    def to_json(self) -> str:
        payload = {
            "pair_group": self.pair_group,
            "group_members": {str(k): v for k, v in self.group_members.items()},
            "seed": self.seed,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Assignment":
        payload = json.loads(text)
        return cls(
            pair_group={k: int(v) for k, v in payload["pair_group"].items()},
            group_members={int(k): v for k, v in payload["group_members"].items()},
            seed=int(payload["seed"]),
        )


def assign_pairs(
    pair_ids: Iterable[str],
    annotators: Sequence[AnnotatorProfile],
    seed: int = 0,
) -> Assignment:
    """Partition pairs into two groups; every pair goes to every group member.

    The partition is a seeded shuffle of the sorted ids split in half,
    so reruns with the same seed reproduce it exactly.
    """
    members: dict[int, list[str]] = {1: [], 2: []}
    for profile in annotators:
        profile.validate()
        if profile.role == "annotator":
            members[profile.group].append(profile.annotator_id)
    for group in (1, 2):
        if not members[group]:
            raise ValueError(f"annotator group {group} is empty")
        members[group].sort()

    ids = sorted(set(pair_ids))
    rng = random.Random(seed)
    rng.shuffle(ids)
    half = (len(ids) + 1) // 2
    pair_group = {pid: (1 if i < half else 2) for i, pid in enumerate(ids)}
    return Assignment(pair_group=pair_group, group_members=members, seed=seed)


# ---------------------------------------------------------------------------
# durable record log
# ---------------------------------------------------------------------------


class AnnotationStore:
    """Append-only record log with replay.

    Submissions are fsynced to the log before the call returns, so an
    acknowledged record survives a crash or restart. Uniqueness — one
    preference per (pair, annotator, round), one resolution per pair —
    is enforced under a lock, making concurrent duplicates yield
    exactly one stored record and one conflict.
    """

    def __init__(self, path, clock: Callable[[], float] = time.time):
        self._path = Path(path)
        self._clock = clock
        self._lock = threading.Lock()
        self.preferences: dict[tuple[str, str, int], PreferenceRecord] = {}
        self.resolutions: dict[str, ResolutionRecord] = {}
        self._replay()
        self._fh = open(self._path, "a", encoding="utf-8")

    def _replay(self):
        if not self._path.exists():
            return
        with open(self._path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                kind = obj.pop("kind")
                if kind == "preference":
                    rec = PreferenceRecord(**obj)
                    self.preferences[(rec.pair_id, rec.annotator_id, rec.round)] = rec
                elif kind == "resolution":
                    rec = ResolutionRecord(**obj)
                    self.resolutions[rec.pair_id] = rec

    def _append(self, kind: str, record):
        obj = {"kind": kind}
        obj.update(asdict(record))
        self._fh.write(json.dumps(obj, sort_keys=True) + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def add_preference(
        self, pair_id: str, annotator_id: str, choice: str, round: int
    ) -> PreferenceRecord:
        record = PreferenceRecord(
            pair_id=pair_id,
            annotator_id=annotator_id,
            choice=choice,
            round=round,
            timestamp=self._clock(),
        )
        key = (pair_id, annotator_id, round)
        with self._lock:
            if key in self.preferences:
                raise DuplicateSubmissionError(
                    f"{annotator_id} already voted on {pair_id} in round {round}"
                )
            self._append("preference", record)
            self.preferences[key] = record
        return record

    def add_resolution(
        self, pair_id: str, expert_id: str, final_choice: str, rationale: str
    ) -> ResolutionRecord:
        record = ResolutionRecord(
            pair_id=pair_id,
            expert_id=expert_id,
            final_choice=final_choice,
            rationale=rationale,
        )
        with self._lock:
            if pair_id in self.resolutions:
                raise DuplicateSubmissionError(f"pair {pair_id} is already resolved")
            self._append("resolution", record)
            self.resolutions[pair_id] = record
        return record

    def votes_for(self, pair_id: str, round: int) -> list[PreferenceRecord]:
        return sorted(
            (
                rec
                for (pid, _, rnd), rec in self.preferences.items()
                if pid == pair_id and rnd == round
            ),
            key=lambda r: r.annotator_id,
        )

    def by_annotator(self, annotator_id: str) -> list[PreferenceRecord]:
        return sorted(
            (
                rec
                for (_, aid, _), rec in self.preferences.items()
                if aid == annotator_id
            ),
            key=lambda r: (r.pair_id, r.round),
        )

    def close(self):
        self._fh.close()


# ---------------------------------------------------------------------------
# campaign engine
# ---------------------------------------------------------------------------


@dataclass
class CampaignConfig:
    # insert a same-annotator re-vote round before expert review
    revote_round: bool = False
    # auto-label completed pairs by strict majority instead of unanimity
    majority_mode: bool = False


@dataclass
class PairStatus:
    pair_id: str
    state: str  # unanimous | disagreed | incomplete
    votes: dict[str, int]
    final_choice: str | None


class AnnotationCampaign:
    """Protocol state over a store, an assignment, and the roster."""

    def __init__(
        self,
        store: AnnotationStore,
        assignment: Assignment,
        profiles: Sequence[AnnotatorProfile],
        pairs: Sequence[PairRecord],
        config: CampaignConfig | None = None,
    ):
        self.store = store
        self.assignment = assignment
        self.profiles = {p.annotator_id: p for p in profiles}
        self.pairs_by_id = {p.pair_id: p for p in pairs}
        self.config = config or CampaignConfig()
        for pid in assignment.pair_group:
            if pid not in self.pairs_by_id:
                raise UnknownPairError(f"assigned pair {pid!r} missing from manifest")

    # -- voting ------------------------------------------------------------

    def _profile(self, annotator_id: str) -> AnnotatorProfile:
        profile = self.profiles.get(annotator_id)
        if profile is None:
            raise NotAuthorizedError(f"unknown annotator {annotator_id!r}")
        return profile

    def active_round(self, pair_id: str) -> int:
        """Round currently open for a pair (2 only in re-vote campaigns)."""
        if not self.config.revote_round:
            return 1
        state, _ = self._round_state(pair_id, 1)
        return 2 if state == "disagreed" else 1

    def submit(
        self, annotator_id: str, pair_id: str, choice: str, round: int | None = None
    ) -> PreferenceRecord:
        if pair_id not in self.pairs_by_id:
            raise UnknownPairError(f"unknown pair {pair_id!r}")
        if choice not in CHOICES:
            raise ValueError(f"choice must be one of {CHOICES}, got {choice!r}")
        profile = self._profile(annotator_id)
        if profile.role != "annotator":
            raise NotAssignedError("experts resolve pairs; they do not vote")
        assigned = self.assignment.annotators_for(pair_id)
        if annotator_id not in assigned:
            raise NotAssignedError(
                f"{annotator_id} is not assigned to pair {pair_id}"
            )
        rnd = self.active_round(pair_id) if round is None else round
        if rnd not in (1, 2):
            raise ValueError(f"round must be 1 or 2, got {rnd}")
        if rnd == 2 and not self.config.revote_round:
            raise InvalidStateError("round 2 voting is disabled for this campaign")
        if rnd == 2 and self.active_round(pair_id) != 2:
            raise InvalidStateError(f"pair {pair_id} is not open for a re-vote")
        return self.store.add_preference(pair_id, annotator_id, choice, rnd)

    # -- state -------------------------------------------------------------

    def _round_state(self, pair_id: str, rnd: int) -> tuple[str, list[PreferenceRecord]]:
        assigned = set(self.assignment.annotators_for(pair_id))
        votes = [
            v for v in self.store.votes_for(pair_id, rnd) if v.annotator_id in assigned
        ]
        distinct = {v.choice for v in votes}
        complete = {v.annotator_id for v in votes} == assigned
        if self.config.majority_mode:
            if not complete:
                return "incomplete", votes
            if self._strict_majority(votes) is not None:
                return "unanimous", votes
            return "disagreed", votes
        if len(distinct) >= 2:
            return "disagreed", votes
        if complete:
            return "unanimous", votes
        return "incomplete", votes

    @staticmethod
    def _strict_majority(votes: list[PreferenceRecord]) -> str | None:
        tally: dict[str, int] = {}
        for v in votes:
            tally[v.choice] = tally.get(v.choice, 0) + 1
        best = max(tally.values())
        winners = [c for c, n in tally.items() if n == best]
        return winners[0] if len(winners) == 1 and best > len(votes) / 2 else None

    def detect_disagreements(self, pair_id: str) -> str:
        """State of a pair: unanimous (auto-labelable), disagreed, incomplete.

        Default rule is the strict one: any two distinct round-1
        choices flag the pair, even before all votes are in. Under
        majority_mode a completed pair auto-labels on a strict majority
        instead. With re-votes enabled, the open re-vote round's state
        takes over once it starts.
        """
        if pair_id not in self.pairs_by_id:
            raise UnknownPairError(f"unknown pair {pair_id!r}")
        state, _ = self._round_state(pair_id, 1)
        if (
            self.config.revote_round
            and state == "disagreed"
            and self.store.votes_for(pair_id, 2)
        ):
            state, _ = self._round_state(pair_id, 2)
        return state

    def final_label(self, pair_id: str) -> str | None:
        resolution = self.store.resolutions.get(pair_id)
        if resolution is not None:
            return resolution.final_choice
        rnd = 1
        if self.config.revote_round and self.store.votes_for(pair_id, 2):
            rnd = 2
        state, votes = self._round_state(pair_id, rnd)
        if state != "unanimous":
            return None
        if self.config.majority_mode:
            return self._strict_majority(votes)
        return votes[0].choice

    def status(self, pair_id: str) -> PairStatus:
        state = self.detect_disagreements(pair_id)
        rnd = 2 if self.config.revote_round and self.store.votes_for(pair_id, 2) else 1
        votes = {c: 0 for c in CHOICES}
        for v in self.store.votes_for(pair_id, rnd):
            votes[v.choice] += 1
        return PairStatus(
            pair_id=pair_id,
            state=state,
            votes=votes,
            final_choice=self.final_label(pair_id),
        )

    # -- expert review -------------------------------------------------------

    def resolve(
        self, expert_id: str, pair_id: str, final_choice: str, rationale: str = ""
    ) -> ResolutionRecord:
        profile = self._profile(expert_id)
        if profile.role != "expert":
            raise NotAuthorizedError(f"{expert_id} is not an expert")
        if pair_id not in self.pairs_by_id:
            raise UnknownPairError(f"unknown pair {pair_id!r}")
        if final_choice not in CHOICES:
            raise ValueError(f"choice must be one of {CHOICES}, got {final_choice!r}")
        state = self.detect_disagreements(pair_id)
        if state != "disagreed":
            raise InvalidStateError(
                f"pair {pair_id} is {state}; only disagreed pairs are resolvable"
            )
        return self.store.add_resolution(pair_id, expert_id, final_choice, rationale)

    # -- queues --------------------------------------------------------------

    def next_pair_for(self, annotator_id: str) -> str | None:
        """Next actionable pair id: unvoted for annotators, unresolved
        disagreements for experts. None when the queue is drained."""
        profile = self._profile(annotator_id)
        if profile.role == "expert":
            for pid in sorted(self.assignment.pair_group):
                if (
                    self.detect_disagreements(pid) == "disagreed"
                    and pid not in self.store.resolutions
                ):
                    return pid
            return None
        for pid in sorted(self.assignment.pair_group):
            if self.assignment.pair_group[pid] != profile.group:
                continue
            rnd = self.active_round(pid)
            if (pid, annotator_id, rnd) not in self.store.preferences:
                return pid
        return None

    def remaining_for(self, annotator_id: str) -> int:
        profile = self._profile(annotator_id)
        if profile.role == "expert":
            return sum(
                1
                for pid in self.assignment.pair_group
                if self.detect_disagreements(pid) == "disagreed"
                and pid not in self.store.resolutions
            )
        count = 0
        for pid, group in self.assignment.pair_group.items():
            if group != profile.group:
                continue
            rnd = self.active_round(pid)
            if (pid, annotator_id, rnd) not in self.store.preferences:
                count += 1
        return count

    # -- export ----------------------------------------------------------------

    def export(self, manifest: DatasetManifest) -> tuple[DatasetManifest, dict]:
        """All raw records plus final labels; labeled pairs updated in a copy."""
        labels: dict[str, str] = {}
        for pid in sorted(self.assignment.pair_group):
            label = self.final_label(pid)
            if label is not None:
                labels[pid] = label
        new_pairs = []
        for p in manifest.pairs:
            if p.pair_id in labels and p.status == "fine_grained":
                new_pairs.append(
                    PairRecord(
                        pair_id=p.pair_id,
                        image_a=p.image_a,
                        image_b=p.image_b,
                        status=p.status,
                        preference=labels[p.pair_id],
                        ssim_ab=p.ssim_ab,
                    )
                )
            else:
                new_pairs.append(p)
        dump = {
            "preferences": [
                asdict(self.store.preferences[k])
                for k in sorted(self.store.preferences)
            ],
            "resolutions": [
                asdict(self.store.resolutions[k])
                for k in sorted(self.store.resolutions)
            ],
            "final_labels": labels,
        }
        updated = DatasetManifest(
            images=list(manifest.images), pairs=new_pairs, scenes=list(manifest.scenes)
        )
        return updated, dump
