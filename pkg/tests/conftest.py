import numpy as np
import pytest

from dcc_segmenter.phantom.specs import DatasetSpec, Ellipsoid, OrganSpec, StructureSpec
from dcc_segmenter.sampler.augment import AugView
from dcc_segmenter.sampler.patches import PatchSource

H = 1e-5


def central_difference(f, x, h=H, coords=None):
    """Central-difference gradient of scalar ``f`` at ``x`` (float64), optionally at a few flat coords"""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size) if coords is None else coords:
        saved = flat[i]
        flat[i] = saved + h
        up = f(x)
        flat[i] = saved - h
        down = f(x)
        flat[i] = saved
        out[i] = (up - down) / (2 * h)
    return grad


def relative_error(analytic, numeric):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    return float(np.max(np.abs(analytic - numeric)) / max(np.max(np.abs(numeric)), 1.0))


def unit_rows(rng, n, d):
    z = rng.normal(size=(n, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def make_view(image, attention, organ_class=1, phase="NC"):
    image = np.asarray(image, dtype=np.float64)
    attention = np.asarray(attention, dtype=np.uint8)
    return AugView(
        image=image,
        attention=attention,
        gt=attention.copy(),
        organ_class=organ_class,
        phase=phase,
        source=PatchSource(slice_index=0, center=(0, 0)),
    )


@pytest.fixture
def finite_diff():
    return central_difference


@pytest.fixture
def rel_err():
    return relative_error


@pytest.fixture
def tiny_spec():
    """Two organs on a 32 x 32 x 16 grid with a body outline and a spine"""
    return DatasetSpec(
        organs=[
            OrganSpec(
                class_id=1,
                name="kidney",
                shape=Ellipsoid(center=(0.3, 0.3, 0.5), semi_axes=(0.15, 0.15, 0.3)),
                intensity_by_phase={"NC": 20.0, "CE": 200.0},
                texture_sd=5.0,
            ),
            OrganSpec(
                class_id=2,
                name="gallbladder",
                shape=Ellipsoid(center=(0.7, 0.7, 0.5), semi_axes=(0.15, 0.15, 0.3)),
                intensity_by_phase={"NC": 10.0, "CE": 20.0},
                texture_sd=5.0,
            ),
        ],
        dims=(32, 32, 16),
        volumes_per_phase=2,
        body=Ellipsoid(center=(0.5, 0.5, 0.5), semi_axes=(0.48, 0.48, 1.0)),
        structures=[
            StructureSpec(name="spine", shape=Ellipsoid(center=(0.75, 0.25, 0.5), semi_axes=(0.08, 0.08, 1.0)), hu=700.0)
        ],
        score_range=(-5.0, 6.0),
        corruption_rate=0.0,
    )
