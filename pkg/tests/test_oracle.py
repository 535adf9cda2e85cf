import math

import pytest

from nodal_forge.oracle import (ORACLES, check_cayley_menger, check_collar_interval, check_flat_torus,
                                check_sphere_spectrum, flat_torus_spectrum, interval_spectrum, observed_order,
                                run_oracle, sphere_spectrum)


def test_flat_torus_spectrum():
    """Test the lattice spectrum counts multiplicities."""
    four_pi2 = 4 * math.pi ** 2
    assert flat_torus_spectrum(2, 5) == pytest.approx([0.0] + [four_pi2] * 4)
    assert flat_torus_spectrum(1, 3) == pytest.approx([0.0, four_pi2, four_pi2])
    assert flat_torus_spectrum(3, 7)[1:] == pytest.approx([four_pi2] * 6)
    assert flat_torus_spectrum(2, 9)[5:] == pytest.approx([2 * four_pi2] * 4)


def test_sphere_spectrum():
    """Test j(j+n-1) with harmonic multiplicities."""
    assert sphere_spectrum(2, 4) == [0.0, 2.0, 2.0, 2.0]
    assert sphere_spectrum(2, 9)[4:] == [6.0] * 5
    assert sphere_spectrum(3, 5) == [0.0, 3.0, 3.0, 3.0, 3.0]


def test_interval_spectrum():
    """Test the Neumann values (kπ/2Γ)²."""
    assert interval_spectrum(1.0, 3) == pytest.approx([0.0, math.pi ** 2 / 4, math.pi ** 2])
    assert interval_spectrum(0.5, 2)[1] == pytest.approx(math.pi ** 2)


def test_observed_order():
    """Test the order from the last two errors."""
    assert observed_order([0.4, 0.1]) == pytest.approx(2.0)
    assert observed_order([1.0, 0.8, 0.1], ratio=8.0) == pytest.approx(1.0)


def test_cayley_menger_oracle():
    """Test the regular simplex volumes."""
    result = check_cayley_menger()
    assert result.passed
    assert result.details["tetrahedron"] == pytest.approx(1 / (6 * math.sqrt(2)))
    assert result.to_dict()["name"] == "cayley-menger"


def test_flat_torus_oracle():
    """Test the flat torus converges at second order."""
    result = check_flat_torus()
    assert result.passed
    assert result.details["errors"][1] < result.details["errors"][0]


def test_sphere_spectrum_oracle():
    """Test the first harmonic level of the round S² converges at second order."""
    result = check_sphere_spectrum()
    assert result.passed
    assert result.details["order"] >= 1.8
    errors = result.details["errors"]
    assert errors[0] > errors[1] > errors[2]


def test_collar_interval_oracle():
    """Test the bare band reproduces the interval spectrum."""
    result = check_collar_interval()
    assert result.passed
    assert result.details["computed"][1] == pytest.approx(math.pi ** 2 / 4, rel=0.02)


def test_unknown_oracle():
    """Test unknown names raise KeyError listing the choices."""
    with pytest.raises(KeyError) as info:
        run_oracle("bogus")
    assert "cayley-menger" in str(info.value)


def test_run_oracle_by_name():
    """Test named dispatch through the registry."""
    assert set(ORACLES) >= {"cayley-menger", "flat-torus", "collar-interval", "sphere-spectrum"}
    assert run_oracle("cayley-menger").passed
