#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "pah/data.hpp"
#include "pah/errors.hpp"

namespace pah {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

int parse_int(const std::string& text, const std::string& column, std::size_t line) {
  int value = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end || text.empty()) {
    throw ParseError("manifest line " + std::to_string(line) + ": bad " + column + " '" + text +
                     "'");
  }
  return value;
}

}  // namespace

std::string split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kQuery: return "query";
    case Split::kGallery: return "gallery";
  }
  return "train";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::kTrain;
  if (text == "query") return Split::kQuery;
  if (text == "gallery") return Split::kGallery;
  throw ParseError("unknown split '" + text + "'");
}

void write_manifest(const fs::path& root, const std::vector<ManifestRecord>& records) {
  std::ofstream out(root / kManifestFile);
  if (!out) throw IoError("cannot write " + (root / kManifestFile).string());
  out << kManifestHeader << '\n';
  for (const auto& r : records) {
    const HeadBox box = r.head_box.value_or(HeadBox{-1, -1, -1, -1});
    out << r.path << ',' << r.identity << ',' << r.clothes_id << ',' << r.camera_id << ','
        << box.x0 << ',' << box.y0 << ',' << box.x1 << ',' << box.y1 << ',' << split_name(r.split)
        << '\n';
  }
  if (!out) throw IoError("failed writing " + (root / kManifestFile).string());
}

std::vector<ManifestRecord> read_manifest(const fs::path& root) {
  const fs::path file = root / kManifestFile;
  std::ifstream in(file);
  if (!in) throw IoError("missing manifest " + file.string());
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw EmptyDatasetError("empty manifest " + file.string());
  if (trim(line) != kManifestHeader) {
    throw ParseError("manifest line 1: expected header '" + std::string(kManifestHeader) + "'");
  }
  std::vector<ManifestRecord> records;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv(line);
    if (fields.size() != 9) {
      throw ParseError("manifest line " + std::to_string(line_no) + ": expected 9 fields, got " +
                       std::to_string(fields.size()));
    }
    for (auto& f : fields) f = trim(f);
    ManifestRecord r;
    r.path = fields[0];
    if (r.path.empty()) throw ParseError("manifest line " + std::to_string(line_no) + ": empty path");
    r.identity = parse_int(fields[1], "identity", line_no);
    r.clothes_id = parse_int(fields[2], "clothes_id", line_no);
    r.camera_id = parse_int(fields[3], "camera_id", line_no);
    if (r.identity < 0) {
      throw ParseError("manifest line " + std::to_string(line_no) + ": negative identity");
    }
    HeadBox box{parse_int(fields[4], "x0", line_no), parse_int(fields[5], "y0", line_no),
                parse_int(fields[6], "x1", line_no), parse_int(fields[7], "y1", line_no)};
    const bool absent = box.x0 == -1 && box.y0 == -1 && box.x1 == -1 && box.y1 == -1;
    if (!absent) r.head_box = box;
    try {
      r.split = parse_split(fields[8]);
    } catch (const ParseError&) {
      throw ParseError("manifest line " + std::to_string(line_no) + ": unknown split '" +
                       fields[8] + "'");
    }
    records.push_back(std::move(r));
  }
  return records;
}

Dataset Dataset::load(const fs::path& root, const LoadOptions& options) {
  Dataset ds;
  ds.root_ = root;
  ds.records_ = read_manifest(root);
  if (ds.records_.empty()) throw EmptyDatasetError("manifest has no records: " + root.string());

  std::set<int> train_ids, test_ids;
  for (std::size_t i = 0; i < ds.records_.size(); ++i) {
    const auto& r = ds.records_[i];
    const std::string where = "manifest line " + std::to_string(i + 2);
    const fs::path image = root / r.path;
    if (!fs::exists(image)) throw ParseError(where + ": missing image " + r.path);
    if (r.head_box) {
      const auto [w, h] = png_size(image);
      if (!r.head_box->valid_for(w, h)) {
        const HeadBox& b = *r.head_box;
        throw ParseError(where + ": head box (" + std::to_string(b.x0) + "," +
                         std::to_string(b.y0) + "," + std::to_string(b.x1) + "," +
                         std::to_string(b.y1) + ") outside " + std::to_string(w) + "x" +
                         std::to_string(h) + " image");
      }
    }
    (r.split == Split::kTrain ? train_ids : test_ids).insert(r.identity);
  }
  if (!options.allow_shared_identities) {
    for (int id : test_ids) {
      if (train_ids.count(id)) {
        throw ParseError("identity " + std::to_string(id) + " appears in train and test splits");
      }
    }
  }

  std::map<int, std::size_t> remap;
  for (int id : train_ids) remap.emplace(id, remap.size());
  ds.num_classes_ = remap.size();
  ds.labels_.resize(ds.records_.size(), 0);
  for (std::size_t i = 0; i < ds.records_.size(); ++i) {
    if (ds.records_[i].split == Split::kTrain) ds.labels_[i] = remap.at(ds.records_[i].identity);
  }
  return ds;
}

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (records_[i].split == split) out.push_back(i);
  }
  return out;
}

std::size_t Dataset::train_label(std::size_t index) const {
  if (index >= records_.size() || records_[index].split != Split::kTrain) {
    throw ContractError("train_label: record " + std::to_string(index) + " is not a training item");
  }
  return labels_[index];
}

ImageSample Dataset::sample(std::size_t index) const {
  const auto& r = records_.at(index);
  ImageSample s;
  s.pixels = read_png(root_ / r.path);
  s.identity = r.identity;
  s.clothes_id = r.clothes_id;
  s.camera_id = r.camera_id;
  s.head_box = r.head_box;
  s.sample_id = static_cast<int>(index);
  return s;
}

}  // namespace pah
