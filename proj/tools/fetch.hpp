#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace fsn {

/// Downloads plain-text LibSVM files `<url_base>/<name>` into `dir`.
/// Existing files are kept unless `force` is set. Throws DataError.
void fetch_datasets(const std::vector<std::string>& names, const std::filesystem::path& dir,
                    const std::string& url_base, bool force);

}  // namespace fsn
