#!/usr/bin/env python3
"""Quick diagnostic to check the solver installation."""

import sys

print("=" * 60)
print("Solver Installation Diagnostic")
print("=" * 60)

# Check 1: Numerical stack
print("\n1. Packages:")
try:
    import numpy
    import pandas
    import pydantic
    import scipy
    print(f"   numpy {numpy.__version__}, scipy {scipy.__version__}, "
          f"pandas {pandas.__version__}, pydantic {pydantic.__version__}")
except ImportError as e:
    print(f"   ❌ Import failed: {e}")
    sys.exit(1)

# Check 2: Config
print("\n2. Configuration:")
try:
    from src.core.config import settings
    settings.validate_settings()
    print(f"   Newton tol {settings.NEWTON_TOL:g}, max iterations {settings.NEWTON_MAX_ITER}")
    print("   ✅ Config validation passed")
except Exception as e:
    print(f"   ❌ Config error: {e}")
    sys.exit(1)

# Check 3: Finite element Hessian on a quadratic
print("\n3. Finite element Hessian:")
try:
    from src.services.function_space import build_dofmap, interpolate
    from src.services.hessian import fe_hessian
    from src.services.mesh import generate_square_mesh

    mesh = generate_square_mesh(-0.5, 0.5, 2)
    H = fe_hessian(interpolate(lambda x, y: x ** 2, build_dofmap(mesh)))
    error = abs(H.h11.coefficients - 2.0).max()
    print(f"   max |H11 - 2| = {error:.2e}")
    if error > 1e-10:
        print("   ❌ Hessian of x^2 is not exact")
        sys.exit(1)
    print("   ✅ Hessian exact on quadratics")
except Exception as e:
    print(f"   ❌ Hessian check failed: {e}")
    import traceback
    traceback.print_exc()
    sys.exit(1)

# Check 4: Small Newton solve
print("\n4. Newton solve (sphere cap, n = 2):")
try:
    from src.services.analysis import manufactured_problem
    from src.services.ma_newton import newton_solve

    U, H, trace = newton_solve(manufactured_problem("sphere"), mesh)
    print(f"   ✅ Converged in {trace.num_iterations} iterations")
except Exception as e:
    print(f"   ❌ Newton solve failed: {e}")
    sys.exit(1)

print("\n" + "=" * 60)
print("All checks passed")
print("=" * 60)
