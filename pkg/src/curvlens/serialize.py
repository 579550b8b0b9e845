"""Machine-readable artifacts: spectrum JSON, stem/trace/landscape CSVs, run manifests."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1


def canonical_json(obj):
    """Deterministic JSON text; floats use the shortest round-trip decimals."""
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def spectrum_document(mixture, operator_info, lanczos_info, analysis):
    """Assemble the spectrum-file dict: schema header, atoms and analysis block."""
    atoms = [{"value": float(loc), "weight": float(w)} for loc, w in mixture.atoms]
    return {
        "schema_version": SCHEMA_VERSION,
        "operator": dict(operator_info),
        "lanczos": dict(lanczos_info),
        "atoms": atoms,
        "analysis": dict(analysis),
    }


def write_spectrum(path, document):
    Path(path).write_text(canonical_json(document))


def read_spectrum(path):
    document = json.loads(Path(path).read_text())
    if document.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported spectrum schema version {document.get('schema_version')}")
    weights = [a["weight"] for a in document["atoms"]]
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ValueError("spectrum atom weights do not sum to 1")
    values = [a["value"] for a in document["atoms"]]
    if any(b < a for a, b in zip(values, values[1:])):
        raise ValueError("spectrum atoms are not sorted ascending")
    return document


def mixture_from_document(document):
    from curvlens.density import DiracMixture

    atoms = tuple((a["value"], a["weight"]) for a in document["atoms"])
    return DiracMixture(atoms=atoms,
                        n_seeds=int(document["lanczos"].get("seeds", 1)),
                        steps=int(document["lanczos"].get("steps", 0)),
                        label=str(document["operator"].get("label", "")))


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x
                             for x in row])


def write_stem_csv(path, mixture):
    _write_rows(path, ["value", "weight"],
                [(float(loc), float(w)) for loc, w in mixture.atoms])


def write_histogram_csv(path, eigenvalues):
    weight = 1.0 / len(eigenvalues)
    _write_rows(path, ["eigenvalue", "weight"], [(float(v), weight) for v in eigenvalues])


def write_trace_csv(path, trace):
    refresh_at = {step: (lmax, lbulk) for step, lmax, lbulk, _, _ in trace.refreshes}
    rows = []
    lam_max = lam_bulk = float("nan")
    for step, (loss, (alpha, beta)) in enumerate(zip(trace.losses, trace.schedule_per_step)):
        if step in refresh_at:
            lam_max, lam_bulk = refresh_at[step]
        rows.append((step, float(loss), float(alpha), float(beta), float(lam_max), float(lam_bulk)))
    _write_rows(path, ["step", "loss", "alpha", "beta", "lambda_max", "lambda_b"], rows)


def write_landscape_csv(path, landscape):
    rows = []
    for row, (idx, eig) in enumerate(zip(landscape.direction_indices, landscape.eigenvalues)):
        for col, t in enumerate(landscape.distances):
            test = (float(landscape.test_losses[row, col])
                    if landscape.test_losses is not None else "")
            rows.append((idx, float(eig), float(t), float(landscape.train_losses[row, col]), test))
    _write_rows(path, ["direction_index", "eigenvalue", "t", "train_loss", "test_loss"], rows)


def write_bounds_csv(path, table):
    _write_rows(path, ["gap", "m", "lanczos_bound", "power_bound", "ratio"], table)


def write_manifest(path, command, flags, seed, wall_time, artifacts):
    document = {
        "command": command,
        "flags": dict(flags),
        "seed": int(seed),
        "wall_time_s": float(wall_time),
        "artifacts": [str(a) for a in artifacts],
    }
    Path(path).write_text(canonical_json(document))
