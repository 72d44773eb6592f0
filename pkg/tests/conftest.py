import json

import numpy as np
import pytest

from toolseg.annotations import AnnotatedImage, RectRegion
from toolseg.taxonomy import ClassTaxonomy


@pytest.fixture
def small_taxonomy():
    return ClassTaxonomy(("Bar", "Disk", "Ring", "Cross", "L-Shape"))


def make_annotated(image_id, truth_class, width=32, height=32, x=4, y=4, w=8, h=8):
    """Minimal in-memory record for fold and rasterization tests."""
    return AnnotatedImage(
        image_id=image_id,
        path=f"{image_id}.png",
        width=width,
        height=height,
        regions=(RectRegion(x, y, w, h, truth_class),),
        truth_class=truth_class,
    )


def make_via_document(records):
    """Build a VIA-style export from (filename, class_name, w, h, rect) tuples."""
    doc = {}
    for filename, class_name, width, height, rect in records:
        doc[filename] = {
            "filename": filename,
            "size": 0,
            "regions": [
                {
                    "shape_attributes": {
                        "name": "rect",
                        "x": rect[0],
                        "y": rect[1],
                        "width": rect[2],
                        "height": rect[3],
                    },
                    "region_attributes": {"class": class_name},
                }
            ],
            "file_attributes": {"width": width, "height": height},
        }
    return json.dumps(doc)


def random_prob_map(rng, height, width, channels, sharpness=3.0):
    """Random valid probability map via softmax of scaled gaussian logits."""
    logits = rng.normal(0.0, sharpness, size=(height, width, channels))
    logits -= logits.max(axis=2, keepdims=True)
    expd = np.exp(logits)
    return expd / expd.sum(axis=2, keepdims=True)


def gradient_check(model, x, target, num_coords, seed=0, step=1e-6):
    """Central-difference check of parameter gradients on a double model.

    Returns the worst relative error over ``num_coords`` randomly sampled
    parameter coordinates. Independent of the backward pass: each numeric
    gradient re-runs the forward computation at perturbed parameters.
    The step is small enough that bias perturbations rarely cross a ReLU
    kink yet large enough to dominate double-precision roundoff.
    """
    import torch

    from toolseg.train import mse_onehot_loss

    model.zero_grad(set_to_none=True)
    loss = mse_onehot_loss(model(x), target)
    loss.backward()
    params = list(model.parameters())
    analytic = [p.grad.detach().clone() for p in params]

    def loss_at() -> float:
        with torch.no_grad():
            return float(mse_onehot_loss(model(x), target))

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(num_coords):
        pi = int(rng.integers(0, len(params)))
        coord = np.unravel_index(
            int(rng.integers(0, params[pi].numel())), tuple(params[pi].shape)
        )
        original = float(params[pi].data[coord])
        with torch.no_grad():
            params[pi].data[coord] = original + step
        plus = loss_at()
        with torch.no_grad():
            params[pi].data[coord] = original - step
        minus = loss_at()
        with torch.no_grad():
            params[pi].data[coord] = original
        numeric = (plus - minus) / (2 * step)
        a = float(analytic[pi][coord])
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, rel)
    return worst


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    lines = []
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" in nodeid:
                name = nodeid.split("::")[-1]
                verdict = "PASS" if status == "passed" else "FAIL"
                lines.append((name, verdict))
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, verdict in sorted(lines):
            terminalreporter.write_line(f"{verdict}  {name}")
