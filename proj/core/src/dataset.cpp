#include "adagent/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "adagent/digest.hpp"
#include "adagent/image.hpp"

namespace adagent::eval {

namespace fs = std::filesystem;

DatasetLayout layout_from_string(const std::string& s) {
  if (s == "mvtec_dirs") return DatasetLayout::mvtec_dirs;
  if (s == "manifest_csv") return DatasetLayout::manifest_csv;
  throw ConfigError("layout must be mvtec_dirs|manifest_csv, got '" + s + "'");
}

std::vector<std::string> DatasetManifest::classes() const {
  std::vector<std::string> out;
  for (const auto& item : test_items) {
    if (std::find(out.begin(), out.end(), item.class_name) == out.end()) {
      out.push_back(item.class_name);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<fs::path> DatasetManifest::shots(const std::string& class_name, int k) const {
  auto it = shot_pool.find(class_name);
  if (it == shot_pool.end()) {
    throw ConfigError("no shot pool for class '" + class_name + "'");
  }
  if (static_cast<int>(it->second.size()) < k) {
    throw ConfigError("class '" + class_name + "' has only " +
                      std::to_string(it->second.size()) + " normal references, need " +
                      std::to_string(k));
  }
  return {it->second.begin(), it->second.begin() + k};
}

namespace {

bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

bool decodes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return false;
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    vision::decode_image(bytes);
    return true;
  } catch (const Error&) {
    return false;
  }
}

std::string make_image_id(const fs::path& relative) {
  std::string id = relative.string();
  const auto dot = id.rfind('.');
  if (dot != std::string::npos) id = id.substr(0, dot);
  std::replace(id.begin(), id.end(), '/', '_');
  std::replace(id.begin(), id.end(), '\\', '_');
  return id;
}

std::vector<fs::path> sorted_images(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && has_image_extension(entry.path())) {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Platform-independent Fisher-Yates; std::shuffle's draw sequence is
// implementation-defined, which would break shot list pinning.
void seeded_shuffle(std::vector<fs::path>& paths, const std::string& dataset,
                    const std::string& class_name, unsigned seed) {
  const std::string digest =
      sha256_hex(dataset + "|" + class_name + "|" + std::to_string(seed));
  std::uint64_t s = 0;
  for (int i = 0; i < 16; ++i) {
    const char c = digest[i];
    s = s * 16 + (c <= '9' ? c - '0' : c - 'a' + 10);
  }
  std::mt19937_64 rng(s);
  for (std::size_t i = paths.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(paths[i - 1], paths[j]);
  }
}

DatasetManifest load_mvtec_dirs(const fs::path& root, unsigned seed) {
  DatasetManifest manifest;
  manifest.name = root.filename().string();
  if (manifest.name.empty()) manifest.name = root.parent_path().filename().string();
  manifest.seed = seed;

  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "test")) {
      class_dirs.push_back(entry.path());
    }
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) {
    throw LayoutError("mvtec_dirs layout expects <root>/<class>/test/{good,<defect>}/ and "
                      "<root>/<class>/train/good/; no class directory with test/ under " +
                      root.string());
  }

  for (const auto& class_dir : class_dirs) {
    const std::string class_name = class_dir.filename().string();
    const fs::path test_dir = class_dir / "test";
    if (!fs::exists(test_dir / "good")) {
      throw LayoutError("mvtec_dirs layout expects " + (test_dir / "good").string() +
                        " (normal test images)");
    }
    std::vector<fs::path> defect_dirs;
    for (const auto& entry : fs::directory_iterator(test_dir)) {
      if (entry.is_directory()) defect_dirs.push_back(entry.path());
    }
    std::sort(defect_dirs.begin(), defect_dirs.end());

    for (const auto& sub : defect_dirs) {
      const int label = sub.filename() == "good" ? 0 : 1;
      for (const auto& img : sorted_images(sub)) {
        if (!decodes(img)) {
          std::cerr << "warning: excluding unreadable image " << img << "\n";
          continue;
        }
        DatasetItem item;
        item.path = img;
        item.class_name = class_name;
        item.label = BinaryLabel(label);
        item.split = "test";
        item.image_id = make_image_id(fs::relative(img, class_dir));
        manifest.test_items.push_back(std::move(item));
      }
    }

    const fs::path train_good = class_dir / "train" / "good";
    std::vector<fs::path> pool;
    if (fs::exists(train_good)) {
      for (const auto& img : sorted_images(train_good)) {
        if (!decodes(img)) {
          std::cerr << "warning: excluding unreadable image " << img << "\n";
          continue;
        }
        pool.push_back(img);
      }
    }
    seeded_shuffle(pool, manifest.name, class_name, seed);
    manifest.shot_pool[class_name] = std::move(pool);
  }
  return manifest;
}

DatasetManifest load_manifest_csv(const fs::path& csv_path, unsigned seed) {
  std::ifstream in(csv_path);
  if (!in) throw LayoutError("cannot open manifest CSV " + csv_path.string());

  DatasetManifest manifest;
  manifest.name = csv_path.stem().string();
  manifest.seed = seed;
  const fs::path base = csv_path.parent_path();

  std::map<std::string, std::vector<fs::path>> pools;
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (row == 1 && line == "path,class,label,split") continue;

    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 4) {
      throw InputError("manifest CSV row " + std::to_string(row) +
                       ": expected path,class,label,split");
    }
    const std::string& label_str = fields[2];
    if (label_str != "0" && label_str != "1") {
      throw InputError("manifest CSV row " + std::to_string(row) + ": bad label '" + label_str +
                       "' (must be 0 or 1)");
    }
    const std::string& split = fields[3];
    if (split != "train" && split != "test") {
      throw InputError("manifest CSV row " + std::to_string(row) + ": bad split '" + split +
                       "' (must be train or test)");
    }
    fs::path img = fields[0];
    if (img.is_relative()) img = base / img;
    if (!fs::exists(img) || !decodes(img)) {
      std::cerr << "warning: excluding unreadable image " << img << " (row " << row << ")\n";
      continue;
    }

    if (split == "test") {
      DatasetItem item;
      item.path = img;
      item.class_name = fields[1];
      item.label = BinaryLabel(label_str == "1" ? 1 : 0);
      item.split = split;
      item.image_id = make_image_id(fs::path(fields[0]));
      manifest.test_items.push_back(std::move(item));
    } else if (label_str == "0") {
      pools[fields[1]].push_back(img);
    }
  }

  for (auto& [class_name, pool] : pools) {
    seeded_shuffle(pool, manifest.name, class_name, seed);
    manifest.shot_pool[class_name] = std::move(pool);
  }
  for (const auto& item : manifest.test_items) {
    manifest.shot_pool.try_emplace(item.class_name);
  }
  return manifest;
}

}  // namespace

DatasetManifest load_dataset(const fs::path& root, DatasetLayout layout, unsigned seed) {
  if (!fs::exists(root)) throw LayoutError("dataset root does not exist: " + root.string());
  switch (layout) {
    case DatasetLayout::mvtec_dirs:
      if (!fs::is_directory(root)) {
        throw LayoutError("mvtec_dirs layout expects a directory, got " + root.string());
      }
      return load_mvtec_dirs(root, seed);
    case DatasetLayout::manifest_csv:
      if (fs::is_directory(root)) {
        throw LayoutError("manifest_csv layout expects a CSV file, got directory " +
                          root.string());
      }
      return load_manifest_csv(root, seed);
  }
  throw ContractError("load_dataset: invalid layout");
}

}  // namespace adagent::eval
