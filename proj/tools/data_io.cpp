#include "data_io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace gpesmc::cli {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream s(line);
  while (std::getline(s, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

double parse_double(const std::string& text, const std::string& where) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) throw DataError(where + ": not a number: '" + text + "'");
  return v;
}

}  // namespace

std::string format_number(double x) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

DataSet read_data_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": empty file");
  const std::vector<std::string> header = split(line);
  int col_k = -1, col_y = -1, col_x = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "k") col_k = static_cast<int>(i);
    if (header[i] == "y") col_y = static_cast<int>(i);
    if (header[i] == "x") col_x = static_cast<int>(i);
  }
  if (col_k < 0 || col_y < 0) throw DataError(source + ": header must contain columns k and y");

  DataSet data;
  if (col_x >= 0) data.latent.emplace();
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> cells = split(line);
    const std::string where = source + ":" + std::to_string(row);
    if (cells.size() != header.size()) throw DataError(where + ": expected " + std::to_string(header.size()) + " fields");
    const double k = parse_double(cells[static_cast<std::size_t>(col_k)], where);
    if (k != static_cast<double>(data.observations.size())) throw DataError(where + ": times must be 0, 1, ..., n");
    data.observations.push_back({static_cast<int>(k), parse_double(cells[static_cast<std::size_t>(col_y)], where)});
    if (col_x >= 0) data.latent->push_back(parse_double(cells[static_cast<std::size_t>(col_x)], where));
  }
  if (data.observations.empty()) throw DataError(source + ": no observations");
  return data;
}

DataSet read_data_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file '" + path + "'");
  return read_data_csv(in, path);
}

void write_data_csv(std::ostream& out, const DataSet& data) {
  out << (data.latent ? "k,y,x\n" : "k,y\n");
  for (std::size_t i = 0; i < data.observations.size(); ++i) {
    out << data.observations[i].k << ',' << format_number(data.observations[i].y);
    if (data.latent) out << ',' << format_number((*data.latent)[i]);
    out << '\n';
  }
}

}  // namespace gpesmc::cli
