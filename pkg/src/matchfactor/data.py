"""Match-record ingestion, validation, and tensor assembly.

Input formats
-------------
``csv``
    Header ``player_id,match_index,assists,deaths,kills,gold,winner,arena_id``;
    UTF-8; ``winner`` in {0, 1}.
``json-lines``
    One record object per line with the same field names; ``winner`` may also
    be a JSON boolean.
``riot-match-json``
    A saved export of match-endpoint responses: a JSON object whose
    ``matches`` list holds one object per match with ``mapId``,
    ``gameCreation``, ``participantIdentities`` (participantId -> player)
    and ``participants`` (participantId -> stats block).  Per player,
    ``match_index`` is the chronological rank of the match (ties broken by
    file position).

Retention rule
--------------
Only records in the configured arena count.  A player is retained when the
records with ``match_index < n_matches`` form a complete history
``0 .. n_matches-1`` (players with longer histories are truncated to their
first ``n_matches`` matches); everyone else is dropped and counted.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass

import numpy as np

from .errors import DuplicateKey, MalformedRecord, NoPlayersRetained

logger = logging.getLogger(__name__)

FEATURES = ("assists", "deaths", "kills", "gold")

CSV_HEADER = (
    "player_id",
    "match_index",
    "assists",
    "deaths",
    "kills",
    "gold",
    "winner",
    "arena_id",
)


@dataclass(frozen=True)
class MatchRecord:
    """One player's performance in one match.

    Counts are integers in canonical data; synthetic datasets generated in
    exact mode may carry fractional values (see ``synthetic``).
    """

    player_id: str
    match_index: int
    assists: float
    deaths: float
    kills: float
    gold: float
    winner: bool
    arena_id: int


def _validate_record(rec: MatchRecord, where: str, line: int | None) -> None:
    if not rec.player_id:
        raise MalformedRecord(f"{where}: empty player_id", line)
    if rec.match_index < 0:
        raise MalformedRecord(f"{where}: negative match_index", line)
    for name in FEATURES:
        value = getattr(rec, name)
        if not np.isfinite(value) or value < 0:
            raise MalformedRecord(f"{where}: {name} must be a non-negative number", line)


@dataclass(frozen=True)
class Dataset:
    """A validated, complete set of player histories.

    ``player_ids`` fixes the player order used by every downstream tensor;
    ``records`` is sorted by (player position, match_index).
    """

    records: tuple[MatchRecord, ...]
    n_matches: int
    arena_id: int
    player_ids: tuple[str, ...]

    @property
    def n_players(self) -> int:
        return len(self.player_ids)

    def feature_counts(self) -> np.ndarray:
        """Raw count tensor of shape (players, 4, matches)."""
        out = np.zeros((self.n_players, len(FEATURES), self.n_matches))
        index = {pid: i for i, pid in enumerate(self.player_ids)}
        for rec in self.records:
            i = index[rec.player_id]
            out[i, :, rec.match_index] = (rec.assists, rec.deaths, rec.kills, rec.gold)
        return out

    def winner_matrix(self) -> np.ndarray:
        """Binary win/loss matrix of shape (players, matches)."""
        out = np.zeros((self.n_players, self.n_matches))
        index = {pid: i for i, pid in enumerate(self.player_ids)}
        for rec in self.records:
            out[index[rec.player_id], rec.match_index] = 1.0 if rec.winner else 0.0
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for rec in self.records:
                writer.writerow(
                    [
                        rec.player_id,
                        rec.match_index,
                        _format_count(rec.assists),
                        _format_count(rec.deaths),
                        _format_count(rec.kills),
                        _format_count(rec.gold),
                        1 if rec.winner else 0,
                        rec.arena_id,
                    ]
                )

    @classmethod
    def build(
        cls,
        records,
        n_matches: int,
        arena_id: int,
        player_order=None,
    ) -> "Dataset":
        """Assemble a Dataset from complete histories, validating completeness."""
        by_player: dict[str, dict[int, MatchRecord]] = {}
        for rec in records:
            by_player.setdefault(rec.player_id, {})
            if rec.match_index in by_player[rec.player_id]:
                raise DuplicateKey(
                    f"duplicate record for ({rec.player_id}, {rec.match_index})"
                )
            by_player[rec.player_id][rec.match_index] = rec
        order = list(player_order) if player_order is not None else sorted(by_player)
        expected = set(range(n_matches))
        flat = []
        for pid in order:
            have = by_player.get(pid, {})
            if set(have) != expected:
                raise ValueError(
                    f"player {pid} does not have a complete 0..{n_matches - 1} history"
                )
            flat.extend(have[i] for i in range(n_matches))
        return cls(
            records=tuple(flat),
            n_matches=n_matches,
            arena_id=arena_id,
            player_ids=tuple(order),
        )


def _format_count(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


@dataclass(frozen=True)
class IngestResult:
    dataset: Dataset
    players_retained: int
    players_dropped: int
    records_read: int
    records_other_arena: int


def _parse_number(raw, name: str, where: str, line: int | None) -> float:
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise MalformedRecord(f"{where}: {name} is not numeric ({raw!r})", line) from None
    return value


def _parse_winner(raw, where: str, line: int | None) -> bool:
    if isinstance(raw, bool):
        return raw
    if str(raw) in ("0", "1"):
        return str(raw) == "1"
    raise MalformedRecord(f"{where}: winner must be 0 or 1 ({raw!r})", line)


def _parse_int(raw, name: str, where: str, line: int | None) -> int:
    try:
        return int(str(raw))
    except (TypeError, ValueError):
        raise MalformedRecord(f"{where}: {name} is not an integer ({raw!r})", line) from None


def _record_from_mapping(row, where: str, line: int | None) -> MatchRecord:
    missing = [k for k in CSV_HEADER if k not in row or row[k] in (None, "")]
    if missing:
        raise MalformedRecord(f"{where}: missing fields {missing}", line)
    rec = MatchRecord(
        player_id=str(row["player_id"]),
        match_index=_parse_int(row["match_index"], "match_index", where, line),
        assists=_parse_number(row["assists"], "assists", where, line),
        deaths=_parse_number(row["deaths"], "deaths", where, line),
        kills=_parse_number(row["kills"], "kills", where, line),
        gold=_parse_number(row["gold"], "gold", where, line),
        winner=_parse_winner(row["winner"], where, line),
        arena_id=_parse_int(row["arena_id"], "arena_id", where, line),
    )
    _validate_record(rec, where, line)
    return rec


def _read_csv(path) -> list[MatchRecord]:
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_HEADER:
            raise MalformedRecord(
                f"bad CSV header: expected {','.join(CSV_HEADER)}", line=1
            )
        for row in reader:
            records.append(_record_from_mapping(row, "csv record", reader.line_num))
    return records


def _read_json_lines(path) -> list[MatchRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"invalid JSON: {exc}", line_no) from None
            if not isinstance(row, dict):
                raise MalformedRecord("record is not an object", line_no)
            records.append(_record_from_mapping(row, "json record", line_no))
    return records


def _read_riot_match_json(path) -> list[MatchRecord]:
    """Flatten saved match-endpoint responses into per-player records."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    matches = doc.get("matches")
    if not isinstance(matches, list):
        raise MalformedRecord("riot-match-json file must hold a 'matches' list")

    # (player, creation time, file position) -> stats; match_index assigned per
    # player by chronological order afterwards
    staged = []
    for pos, match in enumerate(matches):
        where = f"match {pos}"
        if not isinstance(match, dict):
            raise MalformedRecord(f"{where}: not an object")
        arena = _parse_int(match.get("mapId"), "mapId", where, None)
        creation = _parse_int(match.get("gameCreation", pos), "gameCreation", where, None)
        identities = {}
        for ident in match.get("participantIdentities", []):
            pid = ident.get("participantId")
            player = (ident.get("player") or {}).get("summonerName")
            if pid is None or not player:
                raise MalformedRecord(f"{where}: incomplete participant identity")
            identities[pid] = str(player)
        for part in match.get("participants", []):
            pid = part.get("participantId")
            if pid not in identities:
                raise MalformedRecord(f"{where}: participant {pid} has no identity")
            stats = part.get("stats") or {}
            row = {
                "player_id": identities[pid],
                "match_index": 0,  # assigned after sorting
                "assists": stats.get("assists"),
                "deaths": stats.get("deaths"),
                "kills": stats.get("kills"),
                "gold": stats.get("goldEarned"),
                "winner": stats.get("win"),
                "arena_id": arena,
            }
            missing = [k for k, v in row.items() if v is None]
            if missing:
                raise MalformedRecord(f"{where}: missing fields {missing}")
            staged.append((creation, pos, row))

    staged.sort(key=lambda item: (item[2]["player_id"], item[0], item[1]))
    records = []
    counters: dict[str, int] = {}
    for creation, pos, row in staged:
        player = row["player_id"]
        row["match_index"] = counters.get(player, 0)
        counters[player] = row["match_index"] + 1
        records.append(_record_from_mapping(row, f"match at position {pos}", None))
    return records


_READERS = {
    "csv": _read_csv,
    "json-lines": _read_json_lines,
    "riot-match-json": _read_riot_match_json,
}


def ingest(
    path, fmt: str = "csv", arena_id: int = 11, n_matches: int = 100
) -> IngestResult:
    """Read, validate and filter match records into a Dataset.

    Players without a complete first-``n_matches`` history in the chosen
    arena are dropped (and counted); longer histories are truncated.
    """
    if fmt not in _READERS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {sorted(_READERS)}")
    raw = _READERS[fmt](path)

    in_arena = [r for r in raw if r.arena_id == arena_id]
    seen: set[tuple[str, int]] = set()
    for rec in in_arena:
        key = (rec.player_id, rec.match_index)
        if key in seen:
            raise DuplicateKey(f"duplicate record for {key}")
        seen.add(key)

    by_player: dict[str, dict[int, MatchRecord]] = {}
    for rec in in_arena:
        if rec.match_index < n_matches:
            by_player.setdefault(rec.player_id, {})[rec.match_index] = rec

    expected = set(range(n_matches))
    complete = sorted(p for p, recs in by_player.items() if set(recs) == expected)
    dropped = len({r.player_id for r in in_arena}) - len(complete)
    if not complete:
        raise NoPlayersRetained(
            f"no player has a complete 0..{n_matches - 1} history in arena {arena_id}"
        )
    if dropped:
        logger.warning("dropped %d players with incomplete histories", dropped)

    flat = []
    for pid in complete:
        flat.extend(by_player[pid][i] for i in range(n_matches))
    dataset = Dataset(
        records=tuple(flat),
        n_matches=n_matches,
        arena_id=arena_id,
        player_ids=tuple(complete),
    )
    return IngestResult(
        dataset=dataset,
        players_retained=len(complete),
        players_dropped=dropped,
        records_read=len(raw),
        records_other_arena=len(raw) - len(in_arena),
    )


@dataclass(frozen=True)
class NormalizedTensor:
    """Min-max normalized tensor plus everything needed to undo or audit it."""

    tensor: np.ndarray  # (I, 4, K), entries in [0, 1]
    feature_min: np.ndarray
    feature_max: np.ndarray
    constant_mask: np.ndarray
    per_player: bool
    player_ids: tuple[str, ...]
    feature_names: tuple[str, ...] = FEATURES


def normalize_minmax(dataset: Dataset, per_player: bool = False) -> NormalizedTensor:
    """Scale every feature to [0, 1] by its min/max.

    By default min/max are global per feature (across all players and
    matches), which keeps values comparable between players; ``per_player``
    normalizes each player's series separately for sensitivity analysis.
    Constant features map to all-zeros and are flagged in ``constant_mask``.
    """
    counts = dataset.feature_counts()
    if per_player:
        mins = counts.min(axis=2)  # (I, 4)
        maxs = counts.max(axis=2)
        span = maxs - mins
        constant = span == 0
        safe = np.where(constant, 1.0, span)
        tensor = (counts - mins[:, :, None]) / safe[:, :, None]
        tensor[constant] = 0.0
    else:
        mins = counts.min(axis=(0, 2))  # (4,)
        maxs = counts.max(axis=(0, 2))
        span = maxs - mins
        constant = span == 0
        safe = np.where(constant, 1.0, span)
        tensor = (counts - mins[None, :, None]) / safe[None, :, None]
        tensor[:, constant, :] = 0.0
    if constant.any():
        logger.warning("constant features mapped to zeros: mask=%s", constant.tolist())
    return NormalizedTensor(
        tensor=tensor,
        feature_min=mins,
        feature_max=maxs,
        constant_mask=constant,
        per_player=per_player,
        player_ids=dataset.player_ids,
    )


def denormalize(normalized: NormalizedTensor) -> np.ndarray:
    """Recover raw counts from a normalized tensor (constant features included)."""
    span = normalized.feature_max - normalized.feature_min
    if normalized.per_player:
        return normalized.tensor * span[:, :, None] + normalized.feature_min[:, :, None]
    return normalized.tensor * span[None, :, None] + normalized.feature_min[None, :, None]
