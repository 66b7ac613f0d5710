"""Command-line entry points.

Every command fails with a single machine-parseable line on stderr
(`error: <detail>`) and exit code 2; outputs are written atomically.
"""

from __future__ import annotations

import os
import sys
import tempfile
from pathlib import Path

import click

from . import data, evalharness, imaging, losses, model, service, synthetic, training


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(2)


def _load_config_defaults(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _atomic_save(img, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".png.tmp")
    os.close(fd)
    try:
        imaging.save_image(img, tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


@click.group()
def main():
    """Reference-guided multi-level low-light image enhancement."""


@main.command()
@click.option("--data", "data_root", required=True, help="dataset root with low/ and high/")
@click.option("--out", "out_dir", required=True, help="directory for checkpoints and logs")
@click.option("--epochs", default=1000, show_default=True, type=int)
@click.option("--batch", "batch_size", default=8, show_default=True, type=int)
@click.option("--lr", "learning_rate", default=1e-4, show_default=True, type=float)
@click.option("--lambda", "lambda_f", default=2.0, show_default=True, type=float)
@click.option("--alpha", "alpha_margin", default=0.08, show_default=True, type=float)
@click.option("--crop", default=None, type=int, help="random square crop for desk-scale runs")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--train-count", default=data.DEFAULT_TRAIN_COUNT, show_default=True, type=int)
@click.option("--checkpoint-every", default=500, show_default=True, type=int)
@click.option("--resume", default=None, type=click.Path(), help="training checkpoint to resume")
def train(data_root, out_dir, epochs, batch_size, learning_rate, lambda_f, alpha_margin,
          crop, seed, train_count, checkpoint_every, resume):
    """Train the model on a paired dataset."""
    cfg = training.TrainConfig(
        data_root=data_root,
        out_dir=out_dir,
        epochs=epochs,
        batch_size=batch_size,
        learning_rate=learning_rate,
        lambda_f=lambda_f,
        alpha_margin=alpha_margin,
        crop=crop,
        seed=seed,
        train_count=train_count,
        checkpoint_every=checkpoint_every,
    )
    try:
        final = training.train(cfg, resume=resume)
    except Exception as exc:
        _fail(str(exc))
    click.echo(f"final checkpoint: {final}")


@main.command(name="eval")
@click.option("--ckpt", required=True, type=click.Path())
@click.option("--data", "data_root", required=True, type=click.Path())
@click.option("--out", "out_csv", default=None, type=click.Path())
@click.option("--train-count", default=data.DEFAULT_TRAIN_COUNT, show_default=True, type=int)
@click.option("--split", "which", default="test", type=click.Choice(["test", "train"]))
def eval_cmd(ckpt, data_root, out_csv, train_count, which):
    """Score the model on a dataset split (PSNR/SSIM table)."""
    try:
        params = training.load_params(ckpt)
        split = data.load_lol(data_root, train_count=train_count)
        pairs = split.test if which == "test" else split.train
        result = evalharness.evaluate(params, pairs, csv_path=out_csv)
    except Exception as exc:
        _fail(str(exc))
    click.echo(result.table())
    if out_csv:
        click.echo(f"csv written: {out_csv}")


@main.command()
@click.option("--low", "low_path", default=None, type=click.Path())
@click.option("--ref", "ref_path", default=None, type=click.Path())
@click.option("--ckpt", "ckpt_path", default=None, type=click.Path())
@click.option("--out", "out_path", default=None, type=click.Path())
@click.option("--gt", "gt_path", default=None, type=click.Path(), help="print PSNR/SSIM vs this image")
@click.option("--config", "config_path", default=None, type=click.Path(), help="key=value defaults file")
@click.option("--seed", default=None, type=int, help="ignored; inference is deterministic")
def enhance(low_path, ref_path, ckpt_path, out_path, gt_path, config_path, seed):
    """Enhance one image using a reference for brightness.

    Flags omitted on the command line fall back to the --config file
    (keys: low, ref, ckpt, out, gt).
    """
    try:
        defaults = _load_config_defaults(config_path)
        low_path = low_path or defaults.get("low")
        ref_path = ref_path or defaults.get("ref")
        ckpt_path = ckpt_path or defaults.get("ckpt")
        out_path = out_path or defaults.get("out")
        gt_path = gt_path or defaults.get("gt")
        for name, value in [("low", low_path), ("ref", ref_path),
                            ("ckpt", ckpt_path), ("out", out_path)]:
            if not value:
                raise ValueError(f"missing required option --{name} (or config key '{name}')")
        params = training.load_params(ckpt_path)
        low = imaging.load_image(low_path)
        ref = imaging.load_image(ref_path)
        out = model.enhance(low, ref, params)
        _atomic_save(out, Path(out_path))
        if gt_path:
            gt = imaging.load_image(gt_path)
            click.echo(f"psnr_db={imaging.psnr(out, gt):.4f} ssim={imaging.ssim(out, gt):.4f}")
    except Exception as exc:
        _fail(str(exc))
    click.echo(f"written: {out_path}")


@main.command()
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path())
@click.option("--low", "low_path", required=True, type=click.Path())
@click.option("--refs", "refs_dir", required=True, type=click.Path())
@click.option("--out", "out_dir", default="multilevel_out", show_default=True, type=click.Path())
def multilevel(ckpt_path, low_path, refs_dir, out_dir):
    """Enhance one image once per reference in a directory."""
    try:
        params = training.load_params(ckpt_path)
        low = imaging.load_image(low_path)
        refs = _load_ref_dir(refs_dir)
        if not refs:
            raise ValueError(f"no reference images found in {refs_dir}")
        low_stem = Path(low_path).stem
        out_root = Path(out_dir)
        rows = []
        for ref_id, ref in refs:
            out = model.enhance(low, ref, params)
            _atomic_save(out, out_root / f"{low_stem}__{ref_id}.png")
            rows.append((ref_id, imaging.mean_v(out), imaging.mean_v(ref)))
    except Exception as exc:
        _fail(str(exc))
    click.echo(f"{'ref':>12}  {'out_mean_v':>10}  {'ref_mean_v':>10}")
    for ref_id, out_v, ref_v in rows:
        click.echo(f"{ref_id:>12}  {out_v:10.4f}  {ref_v:10.4f}")


def _load_ref_dir(refs_dir):
    refs = []
    for path in sorted(Path(refs_dir).iterdir()):
        if path.suffix.lower() in {".png", ".jpg", ".jpeg"}:
            refs.append((path.stem, imaging.load_image(path)))
    return refs


@main.group()
def diag():
    """Diagnostics."""


@diag.command(name="hsv-recombine")
@click.option("--data", "data_root", required=True, type=click.Path())
@click.option("--train-count", default=data.DEFAULT_TRAIN_COUNT, show_default=True, type=int)
def hsv_recombine(data_root, train_count):
    """PSNR of (H_low, S_low, V_gt) recombination vs ground truth."""
    try:
        split = data.load_lol(data_root, train_count=train_count)
        pairs = split.test or split.train
        recombined = evalharness.hsv_recombination_check(pairs)
        baseline = [imaging.psnr(p.low, p.ref) for p in pairs]
    except Exception as exc:
        _fail(str(exc))
    click.echo(f"{'id':>8}  {'recombined_db':>13}  {'raw_low_db':>10}")
    for pair, rec, raw in zip(pairs, recombined, baseline):
        click.echo(f"{pair.id:>8}  {rec:13.2f}  {raw:10.2f}")
    click.echo(
        f"median recombined: {_median(recombined):.2f} dB, "
        f"median raw low: {_median(baseline):.2f} dB"
    )


def _median(values: list[float]) -> float:
    ordered = sorted(values)
    n = len(ordered)
    mid = n // 2
    return ordered[mid] if n % 2 else (ordered[mid - 1] + ordered[mid]) / 2


@main.command()
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path())
@click.option("--refs", "refs_dir", required=True, type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8765, show_default=True, type=int)
@click.option("--max-upload-mb", default=service.DEFAULT_MAX_UPLOAD_MB, show_default=True, type=int)
@click.option("--cors-origin", default="*", show_default=True)
def serve(ckpt_path, refs_dir, host, port, max_upload_mb, cors_origin):
    """Run the HTTP inference service."""
    try:
        svc = service.build_service(
            ckpt_path, refs_dir, max_upload_mb=max_upload_mb, cors_origin=cors_origin
        )
        server = service.serve(svc, host=host, port=port)
    except Exception as exc:
        _fail(str(exc))
    click.echo(f"serving on http://{host}:{server.server_address[1]} "
               f"({len(svc.references)} references)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()


@main.command(name="make-demo-data")
@click.option("--out", "out_root", required=True, type=click.Path())
@click.option("--pairs", default=12, show_default=True, type=int)
@click.option("--height", default=150, show_default=True, type=int)
@click.option("--width", default=180, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
def make_demo_data(out_root, pairs, height, width, seed):
    """Write a synthetic paired dataset in the LoL directory layout."""
    try:
        root = synthetic.write_dataset(out_root, n=pairs, height=height, width=width, seed=seed)
    except Exception as exc:
        _fail(str(exc))
    click.echo(f"wrote {pairs} pairs under {root}")


@main.command(name="calibrate-margin")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path())
@click.option("--data", "data_root", required=True, type=click.Path())
@click.option("--pairs", "n_pairs", default=20, show_default=True, type=int)
@click.option("--train-count", default=data.DEFAULT_TRAIN_COUNT, show_default=True, type=int)
def calibrate_margin(ckpt_path, data_root, n_pairs, train_count):
    """Mean luminance-span distance over sampled pairs (margin suggestion)."""
    try:
        params = training.load_params(ckpt_path)
        split = data.load_lol(data_root, train_count=train_count)
        chosen = split.train[:n_pairs]
        margin = losses.calibrate_margin([(p.low, p.ref) for p in chosen], params)
    except Exception as exc:
        _fail(str(exc))
    click.echo(f"mean luminance distance over {len(chosen)} pairs: {margin:.6f}")


if __name__ == "__main__":
    main()
