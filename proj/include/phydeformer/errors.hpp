#pragma once

#include <stdexcept>
#include <string>

namespace phydeformer {

// Root of the library's error taxonomy; catch this to handle any failure the
// library raises deliberately.
struct PhyDeformerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad input data: unreadable files, malformed OBJ, topology that an
// operation cannot accept (non-manifold, degenerate, closed where open is
// required, ...).
struct MeshError : PhyDeformerError {
  using PhyDeformerError::PhyDeformerError;
};

// Bad configuration: unknown keys, unparsable values, missing paths.
struct ConfigError : PhyDeformerError {
  using PhyDeformerError::PhyDeformerError;
};

// The math broke down at runtime: non-finite losses or gradients,
// failed factorizations on data that passed validation.
struct NumericalError : PhyDeformerError {
  using PhyDeformerError::PhyDeformerError;
};

}  // namespace phydeformer
