"""Shared helpers for the heavier suites."""

import numpy as np

from gswlab.gsw import Configuration
from gswlab.lattice import ConnectionField, LatticeGeom, SpinorField, Topology
from gswlab.targets import GaugeGroup


def interior_sup(geom, f, margin_phys=0.25):
    """Sup over the interior at a fixed physical margin from the faces."""
    cells = int(np.ceil(margin_phys / geom.h))
    mask = np.ones(geom.dims, bool)
    for ax in range(4):
        sl = [slice(None)] * 4
        sl[ax] = slice(cells, geom.dims[ax] - cells)
        m = np.zeros(geom.dims, bool)
        m[tuple(sl)] = True
        mask &= m
    return float(np.abs(np.asarray(f)[mask]).max())


def smooth_u1_box_config(n):
    """Half-period smooth U(1) data on a unit box (asymptotic regime)."""
    geom = LatticeGeom((n + 1,) * 4, 1.0 / n, Topology.BOX)
    x = geom.coords()
    k = np.pi
    uv = np.zeros(geom.dims + (4,))
    uv[..., 0] = 1.0 + 0.3 * np.sin(k * x[..., 0]) * np.cos(k * x[..., 1])
    uv[..., 1] = 0.4 * np.cos(k * x[..., 2])
    uv[..., 2] = 0.2 * np.sin(k * x[..., 3]) * np.sin(k * x[..., 0])
    uv[..., 3] = 0.1 * np.cos(k * x[..., 1])
    links = np.zeros(geom.dims + (4,))
    links[..., 0] = 0.5 * np.sin(k * x[..., 1])
    links[..., 1] = 0.3 * np.cos(k * x[..., 2])
    links[..., 2] = 0.2 * np.sin(k * x[..., 0]) * np.cos(k * x[..., 3])
    links[..., 3] = 0.15 * np.cos(k * x[..., 0])
    return Configuration(
        ConnectionField(geom, GaugeGroup.U1, links), SpinorField(geom, uv)
    )
