#pragma once

#include <filesystem>
#include <vector>

#include "stepalign/core.hpp"

namespace stepalign {

/// Reads a dataset manifest; embedding paths are resolved relative to the
/// manifest's directory. Throws DataError naming the offending path.
std::vector<DatasetSample> load_manifest(const std::filesystem::path& manifest_path);

/// Writes <dir>/<id>.{video,phrases,steps}.semb for each sample plus the
/// manifest JSON at <dir>/<manifest_name>. Returns the manifest path.
std::filesystem::path save_dataset(const std::vector<DatasetSample>& samples, const std::filesystem::path& dir,
                                   const std::string& manifest_name = "manifest.json");

}  // namespace stepalign
