"""On-disk store for prepared records and the patient split.

A store directory holds one .npy file per record (already at the
256 Hz analysis rate), a records.json manifest, and splits.json.
Windows are cheap to cut, so segments are derived on load rather than
duplicated on disk.
"""

from __future__ import annotations

import io
import json
import os

import numpy as np

from seiznet import TARGET_FS
from seiznet.data.records import EegRecord, load_record, resample_to_256
from seiznet.data.splits import SplitPlan
from seiznet.errors import DataError
from seiznet.fsio import atomic_write_bytes, atomic_write_json, ensure_dir

RECORDS_JSON = "records.json"
SPLITS_JSON = "splits.json"
RECORDS_SUBDIR = "records"


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.save(buf, arr)
    return buf.getvalue()


def save_store(
    out_dir, records: list[EegRecord], plan: SplitPlan, source: dict
) -> None:
    """Write records, manifest, and split plan under out_dir."""
    ensure_dir(out_dir)
    rec_dir = os.path.join(out_dir, RECORDS_SUBDIR)
    ensure_dir(rec_dir)
    seen = set()
    entries = []
    for rec in records:
        if rec.record_id in seen:
            raise DataError(f"duplicate record id {rec.record_id}")
        seen.add(rec.record_id)
        if "/" in rec.record_id or rec.record_id.startswith("."):
            raise DataError(f"record id {rec.record_id!r} is not a safe filename")
        fname = f"{rec.record_id}.npy"
        atomic_write_bytes(os.path.join(rec_dir, fname), _npy_bytes(rec.samples))
        entries.append(
            {
                "record_id": rec.record_id,
                "patient_id": rec.patient_id,
                "fs": rec.fs,
                "onset_sample": rec.onset_sample,
                "n_samples": int(rec.n_samples),
                "file": f"{RECORDS_SUBDIR}/{fname}",
            }
        )
    atomic_write_json(
        os.path.join(out_dir, RECORDS_JSON),
        {"records": entries, "source": source},
    )
    atomic_write_json(os.path.join(out_dir, SPLITS_JSON), plan.to_dict())


def load_store(store_dir) -> tuple[list[EegRecord], SplitPlan, dict]:
    """Read a store back; returns (records, split plan, source info)."""
    manifest_path = os.path.join(store_dir, RECORDS_JSON)
    if not os.path.exists(manifest_path):
        raise DataError(f"{store_dir}: not a record store ({RECORDS_JSON} missing)")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    records = []
    for entry in manifest["records"]:
        samples = np.load(os.path.join(store_dir, entry["file"]))
        records.append(
            EegRecord(
                record_id=entry["record_id"],
                patient_id=entry["patient_id"],
                samples=samples,
                fs=entry["fs"],
                onset_sample=entry["onset_sample"],
            )
        )
    with open(os.path.join(store_dir, SPLITS_JSON)) as fh:
        plan = SplitPlan.from_dict(json.load(fh))
    return records, plan, manifest.get("source", {})


def ingest_manifest(manifest_path) -> list[EegRecord]:
    """Load raw CSV records named by a JSON manifest and bring them
    to the analysis rate.

    Each entry needs patient_id, file (relative to the manifest),
    fs, and onset_sample; record_id defaults to the file stem.
    """
    with open(manifest_path) as fh:
        entries = json.load(fh)
    if not isinstance(entries, list):
        raise DataError(f"{manifest_path}: manifest must be a JSON array")
    base = os.path.dirname(os.fspath(manifest_path))
    records = []
    for i, entry in enumerate(entries):
        missing = {"patient_id", "file", "fs", "onset_sample"} - set(entry)
        if missing:
            raise DataError(
                f"{manifest_path}: entry {i} missing fields {sorted(missing)}"
            )
        rec = load_record(
            os.path.join(base, entry["file"]),
            fs=int(entry["fs"]),
            onset_sample=int(entry["onset_sample"]),
            patient_id=str(entry["patient_id"]),
            record_id=entry.get("record_id"),
        )
        records.append(resample_to_256(rec))
    return records


def records_by_patient(records: list[EegRecord]) -> dict[str, list[EegRecord]]:
    out: dict[str, list[EegRecord]] = {}
    for rec in records:
        out.setdefault(rec.patient_id, []).append(rec)
    return out
