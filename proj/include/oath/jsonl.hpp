#pragma once

// Append-only JSON-lines logs for protocol transcripts.

#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace oath {

class JsonlLog {
 public:
  void append(nlohmann::json record) { records_.push_back(std::move(record)); }
  const std::vector<nlohmann::json>& records() const { return records_; }
  bool empty() const { return records_.empty(); }

  void write(std::ostream& os) const {
    for (const auto& r : records_) os << r.dump() << '\n';
  }
  void save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    write(os);
  }

  static std::vector<nlohmann::json> load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    std::vector<nlohmann::json> out;
    std::string line;
    while (std::getline(is, line))
      if (!line.empty()) out.push_back(nlohmann::json::parse(line));
    return out;
  }

 private:
  std::vector<nlohmann::json> records_;
};

}  // namespace oath
