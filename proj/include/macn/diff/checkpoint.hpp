#pragma once

#include <string>

#include "macn/diff/params.hpp"

namespace macn::diff {

/// Binary checkpoint: magic, version, a free-form tag (the agent variant),
/// then name -> shape -> raw 64-bit values per parameter. Round trips are
/// bit-exact.
void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::string& tag);

/// Loads into an existing store; every stored name must be present with a
/// matching extent. Returns the tag.
std::string load_checkpoint(const std::string& path, ParamStore& store);

/// Reads just the tag without touching any store.
std::string checkpoint_tag(const std::string& path);

}  // namespace macn::diff
