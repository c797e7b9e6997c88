"""Regenerate the synthetic stand-in tables shipped in ``recalboot/fixtures``.

The stand-ins share the column layout of the real mechanical-properties and
thermoelectrics tables so the ingestion pipeline, the imbalanced-split
recipe and the thermoelectrics sequential-learning study run without the
external data. Values are invented; they only mimic the structure
(categorical inputs, a temperature filter, duplicate measurements, a
shift between tension and compression tests, a handful of candidates
meeting all four thermoelectric objectives).

    python scripts/make_fixtures.py
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "recalboot" / "fixtures"

MECH_SCHEMA = """\
provenance: mechanical-properties (synthetic stand-in)
complete_rows: true
dedup_average: true
columns:
  processing_method: {type: categorical, role: input, levels: [cast, wrought, powder, additive, forged]}
  crystal_structure: {type: categorical, role: input, levels: [fcc, bcc, hcp]}
  test_type: {type: categorical, role: input, levels: [tension, compression]}
  density: {type: real, role: input}
  melting_point: {type: real, role: input}
  atomic_radius: {type: real, role: input}
  valence_electrons: {type: real, role: input}
  electronegativity: {type: real, role: input}
  grain_size: {type: real, role: input}
  temperature: {type: real, role: filter, min: 20, max: 25}
  youngs_modulus: {type: real, role: output}
  elongation: {type: real, role: output}
"""

THERMO_SCHEMA = """\
provenance: thermoelectrics (synthetic stand-in)
complete_rows: true
dedup_average: true
columns:
  temperature: {type: real, role: input}
  mean_atomic_mass: {type: real, role: input}
  mean_electronegativity: {type: real, role: input}
  electronegativity_range: {type: real, role: input}
  mean_valence: {type: real, role: input}
  band_gap_estimate: {type: real, role: input}
  carrier_doping: {type: real, role: input}
  mean_atomic_volume: {type: real, role: input}
  zt: {type: real, role: output}
  seebeck: {type: real, role: output}
  power_factor: {type: real, role: output}
  kappa: {type: real, role: output}
"""

PROCESS = ["cast", "wrought", "powder", "additive", "forged"]
STRUCT = ["fcc", "bcc", "hcp"]


def mechanical(gen):
    n_tension, n_compression = 200, 110
    rows = []
    for test in ["tension"] * n_tension + ["compression"] * n_compression:
        proc = int(gen.integers(5))
        struct = int(gen.integers(3))
        density = gen.uniform(2.5, 12.0)
        melt = gen.uniform(900.0, 3000.0)
        radius = gen.uniform(1.2, 1.7)
        valence = gen.uniform(2.0, 10.0)
        eneg = gen.uniform(1.2, 2.3)
        grain = gen.uniform(1.0, 100.0)
        base = 25.0 * density + 0.04 * melt - 60.0 * (radius - 1.45) + [0.0, 15.0, -10.0][struct]
        base += [0.0, 5.0, 2.0, -12.0, 8.0][proc]
        if test == "compression":
            # compression tests read stiffer, more so for dense, high-melting alloys
            base = 1.25 * base + 0.03 * (melt - 900.0) + 8.0 * np.sin(valence)
        modulus = max(base + gen.normal(0.0, 12.0), 5.0)
        elong = max(40.0 - 0.15 * modulus + 3.0 * np.log(grain) + [8.0, 0.0, -5.0][struct]
                    + gen.normal(0.0, 4.0), 0.5)
        temp = 22.0 if gen.random() > 0.12 else float(gen.choice([-196.0, 200.0, 400.0]))
        rows.append([PROCESS[proc], STRUCT[struct], test, density, melt, radius, valence, eneg,
                     grain, temp, modulus, elong])
    # repeated measurements of the same material
    for k in gen.choice(len(rows), size=14, replace=False):
        dup = list(rows[k])
        dup[-2] = dup[-2] + gen.normal(0.0, 5.0)
        dup[-1] = max(dup[-1] + gen.normal(0.0, 1.0), 0.5)
        rows.append(dup)
    # a few incomplete records
    for k in gen.choice(len(rows), size=9, replace=False):
        rows[k][int(gen.choice([3, 7, 10, 11]))] = ""
    header = ["processing_method", "crystal_structure", "test_type", "density", "melting_point",
              "atomic_radius", "valence_electrons", "electronegativity", "grain_size", "temperature",
              "youngs_modulus", "elongation"]
    return header, rows


def thermoelectrics(gen, n=240):
    X = np.column_stack([
        gen.uniform(300.0, 900.0, n),
        gen.uniform(20.0, 200.0, n),
        gen.uniform(1.0, 2.6, n),
        gen.uniform(0.0, 1.8, n),
        gen.uniform(2.0, 7.0, n),
        gen.uniform(0.0, 1.5, n),
        gen.uniform(-3.0, 1.0, n),
        gen.uniform(10.0, 40.0, n),
    ])
    T, mass, eneg, erange, val, gap, dop, vol = X.T
    seebeck = 60.0 + 110.0 * gap + 25.0 * erange - 20.0 * dop + gen.normal(0.0, 15.0, n)
    seebeck = np.clip(seebeck, 5.0, None)
    sigma = 10 ** (4.6 + 0.45 * dop - 0.5 * gap + 0.1 * val + gen.normal(0.0, 0.1, n))  # S/m
    pf = (seebeck * 1e-6) ** 2 * sigma  # W/mK^2
    kappa = np.clip(0.4 + 0.012 * (200.0 - mass) + 0.6 * (2.6 - eneg) + gen.normal(0.0, 0.25, n), 0.2, None)
    zt = 0.8 * pf * T / kappa
    header = ["temperature", "mean_atomic_mass", "mean_electronegativity", "electronegativity_range",
              "mean_valence", "band_gap_estimate", "carrier_doping", "mean_atomic_volume",
              "zt", "seebeck", "power_factor", "kappa"]
    rows = [list(x) + [z, s, p, k] for x, z, s, p, k in zip(X, zt, seebeck, pf, kappa)]
    return header, rows


def thermo_winners(rows):
    return sum(r[8] > 1.25 and r[9] > 175 and r[10] > 5e-3 and r[11] > 1.5 for r in rows)


def write(path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([format(v, ".6g") if isinstance(v, float) else v for v in r])


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    write(OUT / "mechanical_properties.csv", *mechanical(np.random.default_rng(20240501)))
    (OUT / "mechanical_properties.yaml").write_text(MECH_SCHEMA)
    # pick the first seed giving a small, non-empty set of candidates meeting all objectives
    seed = 0
    while True:
        header, rows = thermoelectrics(np.random.default_rng(seed))
        if 3 <= thermo_winners(rows) <= 4:
            break
        seed += 1
    write(OUT / "thermoelectrics.csv", header, rows)
    (OUT / "thermoelectrics.yaml").write_text(THERMO_SCHEMA)
    print(f"thermoelectrics seed {seed}: {thermo_winners(rows)} satisfying rows")


if __name__ == "__main__":
    main()
