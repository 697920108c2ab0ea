#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "isfed/errors.hpp"
#include "isfed/problems.hpp"

namespace isfed {

namespace {

struct SparseRow {
    double label = 0.0;
    std::vector<std::pair<int, double>> entries;  // 1-based index, value
};

SparseRow parse_line(const std::string& line, long line_no) {
    SparseRow row;
    std::istringstream in(line);
    std::string token;
    if (!(in >> token))
        throw ParseError("line " + std::to_string(line_no) + ": missing label");
    char* end = nullptr;
    row.label = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0')
        throw ParseError("line " + std::to_string(line_no) + ": bad label '" + token + "'");
    while (in >> token) {
        if (token[0] == '#') break;  // trailing comment
        auto colon = token.find(':');
        if (colon == std::string::npos)
            throw ParseError("line " + std::to_string(line_no) + ": expected index:value, got '" +
                             token + "'");
        int index = 0;
        double value = 0.0;
        try {
            index = std::stoi(token.substr(0, colon));
            value = std::stod(token.substr(colon + 1));
        } catch (const std::exception&) {
            throw ParseError("line " + std::to_string(line_no) + ": bad pair '" + token + "'");
        }
        if (index < 1)
            throw ParseError("line " + std::to_string(line_no) + ": indices are 1-based");
        row.entries.emplace_back(index, value);
    }
    return row;
}

}  // namespace

AgentDataset load_libsvm(const std::string& path, int forced_dim) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");

    std::vector<SparseRow> rows;
    int max_index = 0;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        // strip whitespace-only lines
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        SparseRow row = parse_line(line, line_no);
        for (const auto& [index, value] : row.entries) max_index = std::max(max_index, index);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ParseError("'" + path + "' holds no samples");

    const int dim = forced_dim > 0 ? forced_dim : max_index;
    if (forced_dim > 0 && max_index > forced_dim)
        throw DimensionMismatchError("feature index " + std::to_string(max_index) +
                                     " exceeds dimension " + std::to_string(forced_dim));

    AgentDataset data;
    data.features = Eigen::MatrixXd::Zero(static_cast<long>(rows.size()), dim);
    data.targets.resize(static_cast<long>(rows.size()));
    for (size_t r = 0; r < rows.size(); ++r) {
        data.targets[static_cast<long>(r)] = rows[r].label > 0.0 ? 1.0 : -1.0;
        for (const auto& [index, value] : rows[r].entries)
            data.features(static_cast<long>(r), index - 1) = value;
    }
    return data;
}

}  // namespace isfed
