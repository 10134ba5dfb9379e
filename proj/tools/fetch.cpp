#include "fetch.hpp"

#include <cstdio>
#include <iostream>

#include <curl/curl.h>

#include "fsn/errors.hpp"

namespace fsn {

namespace fs = std::filesystem;

namespace {

std::size_t write_chunk(char* data, std::size_t size, std::size_t count, void* user) {
  return std::fwrite(data, size, count, static_cast<std::FILE*>(user));
}

void download(const std::string& url, const fs::path& target) {
  fs::path tmp = target;
  tmp += ".part";
  std::FILE* out = std::fopen(tmp.c_str(), "wb");
  if (!out) throw DataError("cannot write '" + tmp.string() + "'");

  CURL* curl = curl_easy_init();
  if (!curl) {
    std::fclose(out);
    throw DataError("curl initialization failed");
  }
  curl_easy_setopt(curl, CURLOPT_URL, url.c_str());
  curl_easy_setopt(curl, CURLOPT_WRITEFUNCTION, write_chunk);
  curl_easy_setopt(curl, CURLOPT_WRITEDATA, out);
  curl_easy_setopt(curl, CURLOPT_FOLLOWLOCATION, 1L);
  curl_easy_setopt(curl, CURLOPT_FAILONERROR, 1L);
  curl_easy_setopt(curl, CURLOPT_CONNECTTIMEOUT, 30L);
  const CURLcode rc = curl_easy_perform(curl);
  curl_easy_cleanup(curl);
  std::fclose(out);
  if (rc != CURLE_OK) {
    fs::remove(tmp);
    throw DataError("download of '" + url + "' failed: " + curl_easy_strerror(rc));
  }
  fs::rename(tmp, target);
}

}  // namespace

void fetch_datasets(const std::vector<std::string>& names, const fs::path& dir,
                    const std::string& url_base, bool force) {
  fs::create_directories(dir);
  curl_global_init(CURL_GLOBAL_DEFAULT);
  try {
    for (const auto& name : names) {
      const fs::path target = dir / name;
      if (fs::exists(target) && !force) {
        std::cout << name << ": present at " << target.string() << '\n';
        continue;
      }
      download(url_base + "/" + name, target);
      std::cout << name << ": fetched to " << target.string() << '\n';
    }
  } catch (...) {
    curl_global_cleanup();
    throw;
  }
  curl_global_cleanup();
}

}  // namespace fsn
