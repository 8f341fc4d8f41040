"""SMT-LIB2 emission, solver subprocess driver, and the fallback solver."""
