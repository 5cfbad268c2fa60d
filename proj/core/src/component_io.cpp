#include "cdi/component_io.hpp"

#include "cdi/errors.hpp"
#include "cdi/image_io.hpp"

namespace cdi {
namespace {

constexpr const char* kFormatKey = "format";
constexpr const char* kFormatValue = "cdi-components-v1";
constexpr const char* kManifestName = "manifest.txt";

bool is_component_entry(const std::string& value) {
  return value.size() > 5 && value.substr(value.size() - 5) == ".iidf";
}

}  // namespace

const LinearImage* ComponentDir::find(const std::string& role) const {
  for (const auto& [r, img] : components)
    if (r == role) return &img;
  return nullptr;
}

const LinearImage& ComponentDir::get(const std::string& role) const {
  const LinearImage* img = find(role);
  if (!img) throw DataError("component dir: missing role '" + role + "'");
  return *img;
}

void ComponentDir::add(const std::string& role, LinearImage img) {
  if (find(role)) throw DataError("component dir: duplicate role '" + role + "'");
  components.emplace_back(role, std::move(img));
}

void save_component_dir(const std::filesystem::path& dir,
                        const ComponentDir& contents) {
  std::filesystem::create_directories(dir);
  KvFile manifest;
  manifest.set(kFormatKey, kFormatValue);
  for (const auto& [role, img] : contents.components) {
    const std::string file = role + ".iidf";
    write_iidf(img, dir / file);
    manifest.set(role, file);
  }
  for (const auto& [k, v] : contents.metadata.entries()) {
    if (k == kFormatKey) continue;
    if (is_component_entry(v))
      throw DataError("component dir: metadata value may not end in .iidf: " + k);
    manifest.set(k, v);
  }
  manifest.save(dir / kManifestName);
}

ComponentDir load_component_dir(const std::filesystem::path& dir) {
  const std::filesystem::path manifest_path = dir / kManifestName;
  if (!std::filesystem::exists(manifest_path))
    throw DataError("component dir: no manifest at " + manifest_path.string());
  const KvFile manifest = KvFile::load(manifest_path);
  if (manifest.get_or(kFormatKey, "") != kFormatValue)
    throw DataError("component dir: unsupported format in " +
                    manifest_path.string());

  ComponentDir out;
  for (const auto& [k, v] : manifest.entries()) {
    if (k == kFormatKey) continue;
    if (is_component_entry(v)) {
      out.add(k, read_iidf(dir / v));
    } else {
      out.metadata.set(k, v);
    }
  }
  return out;
}

ComponentDir to_component_dir(const IntrinsicComponents& comps) {
  ComponentDir out;
  auto put = [&out](const char* role, const LinearImage& img) {
    if (!img.empty()) out.add(role, img);
  };
  put("image", comps.image);
  put("albedo", comps.albedo);
  put("shading", comps.shading);
  put("residual", comps.residual);
  put("gray_shading", comps.gray_shading);
  put("gray_albedo", comps.gray_albedo);
  put("chroma_albedo", comps.chroma_albedo);
  put("chroma_shading", comps.chroma_shading);
  put("rgb_shading", comps.rgb_shading);
  put("inverse_shading", comps.inverse);
  if (comps.chroma) out.add("chroma", comps.chroma->image());
  return out;
}

IntrinsicComponents components_from_dir(const ComponentDir& dir) {
  IntrinsicComponents out;
  auto take = [&dir](const char* role, LinearImage& dst) {
    if (const LinearImage* img = dir.find(role)) dst = *img;
  };
  take("image", out.image);
  take("albedo", out.albedo);
  take("shading", out.shading);
  take("residual", out.residual);
  take("gray_shading", out.gray_shading);
  take("gray_albedo", out.gray_albedo);
  take("chroma_albedo", out.chroma_albedo);
  take("chroma_shading", out.chroma_shading);
  take("rgb_shading", out.rgb_shading);
  take("inverse_shading", out.inverse);
  if (const LinearImage* c = dir.find("chroma")) out.chroma.emplace(*c);
  return out;
}

}  // namespace cdi
