#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cdi/config.hpp"
#include "cdi/formation.hpp"
#include "cdi/image.hpp"

namespace cdi {

// A decomposition serialized as a directory of IIDF files plus manifest.txt.
// The manifest is `key = value` text: entries whose value ends in ".iidf"
// name a component role and its file; every other entry is free metadata
// (seed, split, ...). A `format = cdi-components-v1` entry is required.
struct ComponentDir {
  std::vector<std::pair<std::string, LinearImage>> components;
  KvFile metadata;

  const LinearImage* find(const std::string& role) const;
  // Throws DataError when the role is absent.
  const LinearImage& get(const std::string& role) const;
  void add(const std::string& role, LinearImage img);
};

void save_component_dir(const std::filesystem::path& dir,
                        const ComponentDir& contents);
ComponentDir load_component_dir(const std::filesystem::path& dir);

// Standard roles used for IntrinsicComponents fields: image, albedo, shading,
// residual, gray_shading, gray_albedo, chroma_albedo, chroma_shading,
// rgb_shading, inverse_shading, chroma. Unknown roles (e.g. masks) pass
// through untouched.
ComponentDir to_component_dir(const IntrinsicComponents& comps);
IntrinsicComponents components_from_dir(const ComponentDir& dir);

}  // namespace cdi
