import math

import numpy as np
import pytest

from ricci_timechange.models import (
    MODEL_NAMES,
    SEAM_RADIUS,
    RefinementStudy,
    model_space,
    theorem_b_refinement,
)


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_models_build(name):
    m = model_space(name, 128)
    assert m.mesh.dimension == (1 if name == "flat_circle" else 2)
    assert m.N > m.mesh.dimension or (name == "sphere_band" and m.N == 2)
    assert m.mask.dtype == bool and m.mask.any()
    Np = m.nprime_values()
    assert Np == (m.N + 0.5, 2 * m.N, math.inf)


def test_sphere_band_mask_excludes_seam():
    m = model_space("sphere_band", 128)
    rows = m.mesh.grid(m.mask)[:, 0]
    assert not rows[:SEAM_RADIUS].any() and not rows[-SEAM_RADIUS:].any()
    assert rows[SEAM_RADIUS:-SEAM_RADIUS].all()


def test_weights():
    m = model_space("flat_torus", 32)
    assert np.all(m.weight("zero").values == 0)
    assert np.all(m.weight("constant").values == 0.3)
    assert np.allclose(m.weight("harmonic").values, 0.1 * np.cos(m.mesh.axes[0]))
    with pytest.raises(ValueError, match="harmonic"):
        m.weight("wiggly")


def test_unknown_model():
    with pytest.raises(ValueError, match="flat_circle"):
        model_space("hyperbolic_disc")


def test_sphere_band_needs_multiple_of_four():
    with pytest.raises(ValueError, match="multiple of 4"):
        model_space("sphere_band", 66)


def test_refinement_bookkeeping():
    s = RefinementStudy((1, 2, 4), (-1e-3, -1e-4, -1e-5), (1e-3, 1e-4))
    assert s.slopes == pytest.approx((math.log2(10),))
    assert s.converging
    assert RefinementStudy((1, 2, 4), (0, 0, 0), (1e-3, 0.0)).slopes == (math.inf,)
    assert not RefinementStudy((1, 2, 4), (0, 0, 0), (1e-4, 1e-3)).converging


def test_circle_refinement_converges():
    s = theorem_b_refinement("flat_circle", "harmonic", 2, resolutions=(64, 128, 256))
    assert all(d >= -1e-4 for d in s.min_defects)
    assert s.converging
    assert s.slopes[0] >= 3.5


def test_sphere_band_too_coarse_for_seam_mask():
    with pytest.raises(ValueError, match="unmasked"):
        model_space("sphere_band", 64)
