"""Benchmark evaluation: PSNR/SSIM tables, the HSV recombination
diagnostic, and multi-level enhancement reports."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import torch

from . import data, imaging, model


@dataclass
class EvalRow:
    id: str
    psnr_db: float
    ssim: float


@dataclass
class EvalResult:
    rows: list[EvalRow]
    mean_psnr_db: float
    mean_ssim: float

    def table(self) -> str:
        lines = [f"{'id':>8}  {'psnr_db':>8}  {'ssim':>6}"]
        for r in self.rows:
            lines.append(f"{r.id:>8}  {r.psnr_db:8.2f}  {r.ssim:6.4f}")
        lines.append(f"{'mean':>8}  {self.mean_psnr_db:8.2f}  {self.mean_ssim:6.4f}")
        return "\n".join(lines)


def evaluate(
    params: model.ModelParams, split: list[data.ImagePair], csv_path=None
) -> EvalResult:
    """Enhance each low image against its ground truth and score the result.

    Evaluation mirrors the training-time pairing (reference = ground truth)
    so PSNR/SSIM against the ground truth are well-defined. Per-image rows
    are written in full float precision so the CSV reproduces the reported
    means exactly.
    """
    if not split:
        raise ValueError("evaluate needs a non-empty split")
    rows = []
    with torch.no_grad():
        for pair in split:
            pred = model.enhance(pair.low, pair.ref, params)
            rows.append(
                EvalRow(
                    id=pair.id,
                    psnr_db=imaging.psnr(pred, pair.ref),
                    ssim=imaging.ssim(pred, pair.ref),
                )
            )
    result = EvalResult(
        rows=rows,
        mean_psnr_db=sum(r.psnr_db for r in rows) / len(rows),
        mean_ssim=sum(r.ssim for r in rows) / len(rows),
    )
    if csv_path is not None:
        write_csv(result, csv_path)
    return result


def write_csv(result: EvalResult, path) -> None:
    lines = ["id,psnr_db,ssim"]
    for r in result.rows:
        lines.append(f"{r.id},{r.psnr_db!r},{r.ssim!r}")
    lines.append(f"mean,{result.mean_psnr_db!r},{result.mean_ssim!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def hsv_recombination_check(split: list[data.ImagePair]) -> list[float]:
    """PSNR of (H_low, S_low, V_gt) recombination against the ground truth.

    High values mean hue and saturation of the dark image already carry the
    scene, i.e. only the value channel needs enhancing.
    """
    if not split:
        raise ValueError("hsv_recombination_check needs a non-empty split")
    out = []
    for pair in split:
        hsv_low = imaging.rgb_to_hsv(pair.low)
        hsv_gt = imaging.rgb_to_hsv(pair.ref)
        recombined = imaging.hsv_to_rgb(
            imaging.ImageHSV(h=hsv_low.h, s=hsv_low.s, v=hsv_gt.v)
        )
        out.append(imaging.psnr(recombined, pair.ref))
    return out


@dataclass
class MultiLevelEntry:
    ref_id: str
    output: torch.Tensor
    output_mean_v: float
    ref_mean_v: float


def multilevel_report(
    params: model.ModelParams, low: torch.Tensor, refs: list[tuple[str, torch.Tensor]]
) -> list[MultiLevelEntry]:
    """Enhance `low` once per reference and report mean-V levels."""
    if len(refs) < 2:
        raise ValueError(f"multilevel_report needs >= 2 references, got {len(refs)}")
    entries = []
    with torch.no_grad():
        for ref_id, ref in refs:
            out = model.enhance(low, ref, params)
            entries.append(
                MultiLevelEntry(
                    ref_id=ref_id,
                    output=out,
                    output_mean_v=imaging.mean_v(out),
                    ref_mean_v=imaging.mean_v(ref),
                )
            )
    return entries
