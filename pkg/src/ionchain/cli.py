"""``ionchain`` command line: simulate, estimate, synth, analyze, calibrate, stability.

Exit codes: 0 success, 1 usage/config error, 2 domain/model error (also
"unstable" for ``stability``), 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import __version__, dubin, io
from .equilibrium import (
    ConvergenceError,
    min_spacing_numeric,
    solve_equilibrium,
    spacings_with_midpoints,
    sweep_equilibria,
    write_configuration_csv,
    zigzag_critical_ratio,
)
from .estimation import TrapModel, aspect_ratio, axial_frequency_from_vdc, diagnose_spacings, estimate_report, radial_frequency
from .profile import (
    FitError,
    StitchError,
    calibrate_magnification,
    centered_first_offset,
    detect_peaks,
    fit_density_profile,
    fit_multigaussian,
    render_chain_frames,
    stitch_frames,
    stitched_spacings,
)
from .units import DomainError, Frequency, Length, get_species, length_scale

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_species(p):
    p.add_argument("--species", default="Ca40", help="species name (default Ca40)")
    p.add_argument("--species-registry", help="INI species registry (default: $IONCHAIN_SPECIES_REGISTRY)")


def _add_axial(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--fz-khz", type=float, help="axial frequency wz/2pi in kHz")
    g.add_argument("--vdc", type=float, help="endcap voltage; wz scales as sqrt(V_dc) from the reference point")
    p.add_argument("--fz-err-khz", type=float, default=0.0)
    p.add_argument("--fz-ref-khz", type=float, default=2.95, help="reference wz/2pi for --vdc (kHz)")
    p.add_argument("--vdc-ref", type=float, default=2000.0, help="reference V_dc for --vdc")


def _omega_z(args) -> Frequency:
    if args.vdc is not None:
        return axial_frequency_from_vdc(args.vdc, Frequency.from_khz(args.fz_ref_khz, args.fz_err_khz), args.vdc_ref)
    if args.fz_khz is None:
        raise UsageError("one of --fz-khz or --vdc is required")
    return Frequency.from_khz(args.fz_khz, args.fz_err_khz)


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def _provenance(args, inputs=()) -> dict:
    return {
        "tool": "ionchain",
        "tool_version": __version__,
        "config": _config(args),
        "input_checksums": {str(p): io.sha256_file(p) for p in inputs},
    }


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------- simulate


def _simulate_summary(cfg, l: Length) -> dict:
    n = cfg.n_ions
    s = {"n_ions": n, "length_scale_um": l.um, "iterations": cfg.iterations, "grad_norm": cfg.grad_norm}
    if n < 2:
        s.update(a0_numeric_um=None, a0_dubin_um=None, half_extent_numeric_um=None, half_length_dubin_um=None)
        return s
    a0_num = min_spacing_numeric(cfg) * l.value
    a0_d = dubin.min_spacing_dubin(n, l).value
    half_num = float(cfg.positions[-1] - cfg.positions[0]) / 2 * l.value
    half_d = dubin.half_length(n, l).value
    stab = zigzag_critical_ratio(n, cfg)
    s.update(
        a0_numeric_um=a0_num * 1e6,
        a0_dubin_um=a0_d * 1e6,
        a0_james_um=dubin.min_spacing_james(n, l).um,
        a0_rel_diff_dubin=(a0_num - a0_d) / a0_d,
        half_extent_numeric_um=half_num * 1e6,
        half_length_dubin_um=half_d * 1e6,
        half_length_rel_diff=(half_d - half_num) / half_num,
        critical_ratio=stab.critical_ratio,
    )
    return s


def cmd_simulate(args) -> int:
    species = get_species(args.species, args.species_registry)
    wz = _omega_z(args)
    l = length_scale(species, wz)
    out = _outdir(args.out)
    if args.n_range:
        try:
            lo, hi = (int(v) for v in args.n_range.split(":"))
        except ValueError:
            raise UsageError("--n-range must look like START:STOP") from None
        if lo < 1 or hi < lo:
            raise UsageError("--n-range needs 1 <= START <= STOP")
        cfgs = sweep_equilibria(range(lo, hi + 1), max_workers=args.workers)
        rows = [_simulate_summary(cfgs[n], l) for n in range(lo, hi + 1)]
        keys = ["n_ions", "a0_numeric_um", "a0_dubin_um", "half_extent_numeric_um", "half_length_dubin_um", "critical_ratio"]
        io.write_csv(out / "sweep.csv", keys, ([r.get(k) for k in keys] for r in rows))
        io.write_json(out / "summary.json", {**_provenance(args), "sweep": rows})
        print(f"solved N = {lo}..{hi}; wrote {out / 'sweep.csv'}")
        return EXIT_OK
    if args.n is None:
        raise UsageError("one of --n or --n-range is required")
    cfg = solve_equilibrium(args.n)
    write_configuration_csv(cfg, out / "positions.csv", l.value)
    io.write_spacings_csv(out / "spacings.csv", spacings_with_midpoints(cfg, l.value))
    summary = _simulate_summary(cfg, l)
    if args.fx_khz is not None and args.n >= 2:
        trap = TrapModel(wz, Frequency.from_khz(args.fx_khz))
        rho, _ = aspect_ratio(trap)
        summary.update(rho=rho, stability_margin=1 - rho / summary["critical_ratio"])
    io.write_json(out / "summary.json", {**_provenance(args), "summary": summary})
    if args.n >= 2:
        print(
            f"N = {args.n}: a0 oracle {summary['a0_numeric_um']:.3f} um, Dubin {summary['a0_dubin_um']:.3f} um "
            f"({100 * summary['a0_rel_diff_dubin']:+.2f} %); critical (wz/wr)^2 = {summary['critical_ratio']:.6g}"
        )
    else:
        print("N = 1: single ion at the trap centre")
    return EXIT_OK


# --------------------------------------------------------------------- estimate


def _print_report(rep, laws):
    print(f"a0 = {rep.a0_mean.um:.4f} +- {rep.a0_mean.sigma_um:.4f} um, l = {rep.inputs['length_scale_um']:.3f} um")
    print(f"{'law':<8}{'N_real':>12}{'N':>7}{'sigma':>10}{'rel':>9}  dominant")
    for b in (rep.n_dubin, rep.n_james):
        if b.law in laws:
            print(f"{b.law:<8}{b.n_real:>12.3f}{b.n:>7d}{b.sigma:>10.3f}{100 * b.rel_sigma:>8.2f}%  {rep.dominant_uncertainty}")


def cmd_estimate(args) -> int:
    species = get_species(args.species, args.species_registry)
    wz = _omega_z(args)
    rep = estimate_report(Length.from_um(args.a0, args.a0_err), species, wz, args.mag_rel_err)
    laws = ("dubin", "james") if args.law == "both" else (args.law,)
    _print_report(rep, laws)
    if args.out:
        io.write_json(args.out, {**_provenance(args), "report": rep.to_dict()})
    return EXIT_OK


# --------------------------------------------------------------------- synth


def cmd_synth(args) -> int:
    species = get_species(args.species, args.species_registry)
    l = length_scale(species, _omega_z(args))
    x = solve_equilibrium(args.n).as_float() * l.value
    M, px = args.magnification, args.pixel_size_um * 1e-6
    step = args.step_um * 1e-6
    first = (
        args.first_offset_um * 1e-6
        if args.first_offset_um is not None
        else centered_first_offset(args.frames, step, M, px)
    )
    frames = render_chain_frames(
        x,
        n_frames=args.frames,
        step=step,
        first_offset=first,
        magnification=M,
        pixel_size=px,
        psf_sigma=args.psf_um * 1e-6,
        amplitude=args.amplitude,
        background=args.background,
        jitter=args.jitter_um * 1e-6,
        noise_model=args.noise,
        seed=args.seed,
    )
    out = _outdir(args.out)
    entries = []
    for k, f in enumerate(frames):
        name = f"frame_{k}.csv"
        io.write_frame_csv(out / name, f.profile)
        entries.append((name, f.profile.frame_offset_nominal * 1e6))
    io.write_manifest(out / "manifest.json", M, args.pixel_size_um, entries, args.mag_rel_err)
    io.write_json(
        out / "truth.json",
        {
            **_provenance(args),
            "ion_positions_um": x * 1e6,
            "true_offsets_um": [f.true_offset * 1e6 for f in frames],
            "clipped": [list(f.clipped) for f in frames],
        },
    )
    print(f"wrote {len(frames)} frames of a {args.n}-ion chain to {out}")
    return EXIT_OK


# --------------------------------------------------------------------- analyze


class StageError(Exception):
    def __init__(self, stage, frame, exc):
        where = f"frame {frame}" if frame is not None else "all frames"
        super().__init__(f"stage '{stage}' failed ({where}): {exc}")
        self.cause = exc


def cmd_analyze(args) -> int:
    species = get_species(args.species, args.species_registry)
    wz = _omega_z(args)
    mag, mag_rel, frames = io.read_manifest(args.manifest)
    if args.mag_rel_err is not None:
        mag_rel = args.mag_rel_err
    fitted = []
    for k, (prof, _) in enumerate(frames):
        init = detect_peaks(prof, args.min_prominence)
        if len(init) == 0:
            raise StageError("detect", k, DomainError("no peaks found"))
        try:
            fitted.append((prof, fit_multigaussian(prof, init)))
        except FitError as exc:
            raise StageError("fit", k, exc) from exc
    try:
        st = stitch_frames(fitted, mag)
    except StitchError as exc:
        raise StageError("stitch", None, exc) from exc
    samples = stitched_spacings(st)
    out = _outdir(args.out)
    inputs = [Path(args.manifest)] + [f for _, f in frames]
    prov = _provenance(args, inputs)
    io.write_json(out / "peaks.json", {**prov, "frames": [p.to_dict() for _, p in fitted]})
    io.write_json(out / "stitch.json", {**prov, "stitch": st.to_dict()})
    io.write_spacings_csv(out / "spacings.csv", samples)
    if len(samples) < 3:
        print(f"total count {st.total_count}; too few spacings for the density diagnostic")
        return EXIT_OK
    rep = diagnose_spacings(samples, species, wz, args.dispersion_target, mag_rel, args.n_central)
    io.write_json(out / "estimate.json", {**prov, "report": rep.to_dict()})
    try:
        dfit = fit_density_profile(samples, st.total_count)
    except (FitError, DomainError) as exc:
        raise StageError("density_fit", None, exc) from exc
    z, a = dfit.curve(512)
    io.write_csv(out / "density_fit.csv", ["z_um", "a_fit_um"], zip(z * 1e6, a * 1e6))
    io.write_json(
        out / "density_fit.json",
        {
            **prov,
            "n_ions": st.total_count,
            "center_um": dfit.params.center * 1e6,
            "full_length_fit_um": dfit.full_length * 1e6,
            "full_length_measured_um": float(st.global_positions[-1] - st.global_positions[0]) * 1e6,
            "rms_inverse_spacing_per_um": dfit.rms * 1e-6,
        },
    )
    print(f"total count {st.total_count}; redundancy {st.redundancy_counts}")
    for w in st.warnings:
        print(f"warning: {w}")
    _print_report(rep, ("dubin", "james"))
    return EXIT_OK


# --------------------------------------------------------------------- calibrate


def cmd_calibrate(args) -> int:
    stage, image = [], []
    with open(args.pairs_csv, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            try:
                stage.append(float(r["stage_um"]) * 1e-6)
                image.append(float(r["image_px"]))
            except (KeyError, ValueError) as exc:
                raise DomainError(f"{args.pairs_csv}: needs numeric stage_um,image_px columns ({exc})") from exc
    fit = calibrate_magnification(np.array(stage), np.array(image), args.pixel_size_um * 1e-6)
    print(f"magnification = {fit.magnification:.6f} +- {fit.sigma:.6f}")
    if args.out:
        io.write_json(args.out, {**_provenance(args, [args.pairs_csv]), "fit": fit.to_dict()})
    return EXIT_OK


# --------------------------------------------------------------------- stability


def cmd_stability(args) -> int:
    wz = _omega_z(args)
    if args.fr_khz is not None:
        wr = Frequency.from_khz(args.fr_khz)
        rho = (wz.value / wr.value) ** 2
    else:
        if args.fx_khz is None and args.vrf is None:
            raise UsageError("one of --fr-khz, --fx-khz or --vrf is required")
        trap = TrapModel(wz, Frequency.from_khz(args.fx_khz) if args.fx_khz is not None else None, v_rf=args.vrf)
        wr = radial_frequency(trap)
        rho, _ = aspect_ratio(trap)
    res = zigzag_critical_ratio(args.n)
    stable = res.is_stable(rho)
    print(f"N = {args.n}: rho = (wz/wr)^2 = {rho:.6g}, critical = {res.critical_ratio:.6g}, margin = {res.margin(rho):+.4f}")
    print("linear chain stable" if stable else "linear chain UNSTABLE (zigzag)")
    if args.out:
        io.write_json(
            args.out,
            {
                **_provenance(args),
                "rho": rho,
                "fr_khz": wr.khz,
                "critical_ratio": res.critical_ratio,
                "margin": res.margin(rho),
                "stable": stable,
            },
        )
    return EXIT_OK if stable else EXIT_DOMAIN


# --------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ionchain", description="Ion-number diagnostic for long 1-D ion chains.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="equilibrium chain(s) from the numerical oracle")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--n", type=int)
    g.add_argument("--n-range", help="batch sweep START:STOP (inclusive), run as parallel jobs")
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--fx-khz", type=float, help="radial wx/2pi for a stability margin in the summary")
    s.add_argument("--out", default="simulate_out")
    _add_species(s)
    _add_axial(s)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="ion number from a measured central spacing")
    e.add_argument("--a0", type=float, required=True, help="central spacing (um)")
    e.add_argument("--a0-err", type=float, default=0.0, help="its uncertainty (um)")
    e.add_argument("--mag-rel-err", type=float, default=0.0, help="relative magnification uncertainty")
    e.add_argument("--law", choices=("dubin", "james", "both"), default="both")
    e.add_argument("--out", help="JSON report path")
    _add_species(e)
    _add_axial(e)
    e.set_defaults(func=cmd_estimate)

    y = sub.add_parser("synth", help="render a synthetic translated-objective scan of an oracle chain")
    y.add_argument("--n", type=int, default=155)
    y.add_argument("--frames", type=int, default=5)
    y.add_argument("--step-um", type=float, default=1000.0)
    y.add_argument("--first-offset-um", type=float, help="stage reading of frame 0 (default: centred scan)")
    y.add_argument("--magnification", type=float, default=11.58)
    y.add_argument("--pixel-size-um", type=float, default=13.0)
    y.add_argument("--psf-um", type=float, default=2.0, help="object-space PSF sigma")
    y.add_argument("--amplitude", type=float, default=200.0)
    y.add_argument("--background", type=float, default=2.0)
    y.add_argument("--jitter-um", type=float, default=5.0, help="uniform per-translation stage error bound")
    y.add_argument("--noise", choices=("none", "poisson"), default="poisson")
    y.add_argument("--mag-rel-err", type=float, default=0.0)
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--out", default="synth_out")
    _add_species(y)
    _add_axial(y)
    y.set_defaults(func=cmd_synth)

    a = sub.add_parser("analyze", help="frames -> peaks -> stitch -> spacings -> ion number")
    a.add_argument("manifest")
    a.add_argument("--out", default="analyze_out")
    a.add_argument("--min-prominence", type=float, default=None)
    a.add_argument("--dispersion-target", type=float, default=0.02)
    a.add_argument("--n-central", type=int, default=None, help="fix N_a instead of choosing it")
    a.add_argument("--mag-rel-err", type=float, default=None, help="override the manifest value")
    _add_species(a)
    _add_axial(a)
    a.set_defaults(func=cmd_analyze)

    c = sub.add_parser("calibrate", help="magnification from a stage scan (CSV: stage_um,image_px)")
    c.add_argument("pairs_csv")
    c.add_argument("--pixel-size-um", type=float, default=13.0)
    c.add_argument("--out")
    c.set_defaults(func=cmd_calibrate)

    t = sub.add_parser("stability", help="zigzag margin of a linear chain")
    t.add_argument("--n", type=int, required=True)
    r = t.add_mutually_exclusive_group()
    r.add_argument("--fr-khz", type=float, help="radial wr/2pi directly")
    r.add_argument("--fx-khz", type=float, help="wx/2pi; wr^2 = wx^2 - wz^2/2")
    r.add_argument("--vrf", type=float, help="rf amplitude through the (157 +- 1) kHz / 2000 V line")
    t.add_argument("--out")
    _add_axial(t)
    t.set_defaults(func=cmd_stability)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ionchain: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"ionchain: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if isinstance(exc.cause, FitError) else EXIT_DOMAIN
    except (StitchError, DomainError) as exc:
        print(f"ionchain: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (ConvergenceError, FitError) as exc:
        print(f"ionchain: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"ionchain: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
