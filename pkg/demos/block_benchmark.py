"""Preconditioner comparison on the dielectric block waveguide.

A y-polarised plane wave enters through the left side of the unit square; the
core strip |y - 0.5| < 0.25 has refractive index 1.516, the cladding is air.
We solve the real 2x2 block system with right-preconditioned GMRES and print
the iteration counts for each preconditioner. ">" marks the 1000 cap.
At omega=20 this mesh has only about 7 cells per core wavelength.
"""
from maxwell_ddm.fem import EdgeSpace, MaterialMap, PlaneWave, build_block_system
from maxwell_ddm.mesh import GeometrySpec, build_rect_mesh
from maxwell_ddm.solver import GmresConfig, gmres, make_preconditioner

n = 32
mesh = build_rect_mesh(n, n, GeometrySpec.block())
space = EdgeSpace(mesh)
mat = MaterialMap.from_mesh(mesh)
print(f"{mesh.n_cells} cells, {space.n} edge unknowns ({2 * space.n} real)")

cfg = GmresConfig(rel_tol=1e-8, restart=50, max_iterations=1000)

for omega in (5.0, 10.0, 20.0):
    system = build_block_system(space, mat, omega, PlaneWave())
    line = [f"omega={omega:5.1f}"]
    for name in ("ilu0", "ssor", "block_diag"):
        P = make_preconditioner(name, system.K, system.B)
        x, rep = gmres(system.operator(), system.rhs_real, P, cfg)
        mark = "" if rep.converged else ">"
        line.append(f"{name}={mark}{rep.iterations}")
    print("  ".join(line))
