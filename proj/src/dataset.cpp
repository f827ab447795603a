#include "maskdiff/dataset.hpp"

#include <fstream>
#include <sstream>

#include "maskdiff/errors.hpp"

namespace maskdiff {

void write_dataset(const DatasetFile& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "maskdiff-data 1 " << ds.vocab << ' ' << ds.len << ' ' << ds.source << ' '
        << ds.seed << ' ' << ds.rows.size() << '\n';
    for (const TokenSeq& row : ds.rows) {
        for (size_t i = 0; i < row.size(); ++i) {
            if (i) out << ' ';
            out << row[i];
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

DatasetFile read_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw IoError(path + ": empty file");
    std::istringstream header(line);
    std::string magic;
    int version = 0;
    size_t count = 0;
    DatasetFile ds;
    if (!(header >> magic >> version >> ds.vocab >> ds.len >> ds.source >> ds.seed >> count) ||
        magic != "maskdiff-data") {
        throw IoError(path + ":1: malformed dataset header");
    }
    if (version != 1) throw IoError(path + ":1: unsupported dataset version");
    if (ds.vocab < 2 || ds.len < 1) throw IoError(path + ":1: invalid vocab/len in header");

    ds.rows.reserve(count);
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        TokenSeq row;
        row.reserve(ds.len);
        int tok;
        while (ls >> tok) {
            if (tok < 0 || tok >= ds.vocab) {
                throw IoError(path + ":" + std::to_string(lineno) + ": token out of range");
            }
            row.push_back(tok);
        }
        if (static_cast<int>(row.size()) != ds.len) {
            throw IoError(path + ":" + std::to_string(lineno) + ": row length != len");
        }
        ds.rows.push_back(std::move(row));
    }
    if (ds.rows.size() != count) {
        throw IoError(path + ": truncated file: header declares " + std::to_string(count) +
                      " rows, found " + std::to_string(ds.rows.size()));
    }
    return ds;
}

}  // namespace maskdiff
