// SPDX-License-Identifier: Apache-2.0
#include "mtx/predlog.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace mtx {

namespace {

std::string fmt_g9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string fmt_q3(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

// Tokens joined by '|'; equal neighbors collapse to tok*run for run >= 2.
std::string rle_join(const std::vector<std::string>& toks) {
    std::string out;
    size_t i = 0;
    while (i < toks.size()) {
        size_t j = i;
        while (j + 1 < toks.size() && toks[j + 1] == toks[i]) ++j;
        if (!out.empty()) out += '|';
        out += toks[i];
        if (j > i) out += "*" + std::to_string(j - i + 1);
        i = j + 1;
    }
    return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        size_t p = s.find(sep, start);
        if (p == std::string::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, p - start));
        start = p + 1;
    }
}

// Expands tok or tok*run sequences; calls sink(token) run times.
template <typename F>
void rle_expand(const std::string& body, F&& sink) {
    for (const auto& piece : split(body, '|')) {
        size_t star = piece.find('*');
        std::string tok = star == std::string::npos ? piece : piece.substr(0, star);
        size_t run = 1;
        if (star != std::string::npos) {
            long r = std::strtol(piece.c_str() + star + 1, nullptr, 10);
            require(r >= 2, ErrorCode::data, "malformed run length in payload: " + piece);
            run = size_t(r);
        }
        require(!tok.empty(), ErrorCode::data, "empty token in payload");
        for (size_t k = 0; k < run; ++k) sink(tok);
    }
}

std::pair<size_t, size_t> parse_dims(const std::string& s) {
    size_t x = s.find('x');
    require(x != std::string::npos && x > 0 && x + 1 < s.size(), ErrorCode::data,
            "malformed map dims: " + s);
    return {size_t(std::strtoul(s.c_str(), nullptr, 10)),
            size_t(std::strtoul(s.c_str() + x + 1, nullptr, 10))};
}

} // namespace

std::string payload_regression(const float* v, size_t n) {
    require(n >= 1, ErrorCode::data, "regression payload needs at least one value");
    std::string out = "r:";
    for (size_t i = 0; i < n; ++i) {
        if (i) out += '|';
        out += fmt_g9(double(v[i]));
    }
    return out;
}

std::string payload_class(int idx) { return "c:" + std::to_string(idx); }

std::string payload_class(int idx, double margin) {
    return "c:" + std::to_string(idx) + "|m:" + fmt_g9(margin);
}

std::string payload_class_map(const int* ids, size_t h, size_t w) {
    std::vector<std::string> toks(h * w);
    for (size_t i = 0; i < h * w; ++i) toks[i] = std::to_string(ids[i]);
    return "M:" + std::to_string(h) + "x" + std::to_string(w) + ":" + rle_join(toks);
}

std::string payload_dense_map(const float* v, size_t h, size_t w) {
    std::vector<std::string> toks(h * w);
    for (size_t i = 0; i < h * w; ++i) toks[i] = fmt_q3(double(v[i]));
    return "D:" + std::to_string(h) + "x" + std::to_string(w) + ":" + rle_join(toks);
}

Payload parse_payload(const std::string& s) {
    require(s.size() >= 2 && s[1] == ':', ErrorCode::data, "malformed payload: " + s);
    Payload p{};
    char tag = s[0];
    std::string body = s.substr(2);
    switch (tag) {
        case 'r': {
            p.kind = PayloadKind::regression;
            for (const auto& tok : split(body, '|'))
                p.values.push_back(std::strtod(tok.c_str(), nullptr));
            return p;
        }
        case 'c': {
            p.kind = PayloadKind::classification;
            auto parts = split(body, '|');
            require(!parts.empty() && !parts[0].empty(), ErrorCode::data,
                    "malformed class payload: " + s);
            p.ids.push_back(int(std::strtol(parts[0].c_str(), nullptr, 10)));
            if (parts.size() > 1) {
                require(parts[1].rfind("m:", 0) == 0, ErrorCode::data,
                        "malformed class payload: " + s);
                p.margin = std::strtod(parts[1].c_str() + 2, nullptr);
            }
            return p;
        }
        case 'M':
        case 'D': {
            size_t colon = body.find(':');
            require(colon != std::string::npos, ErrorCode::data, "malformed map payload: " + s);
            auto [h, w] = parse_dims(body.substr(0, colon));
            p.h = h;
            p.w = w;
            std::string cells = body.substr(colon + 1);
            if (tag == 'M') {
                p.kind = PayloadKind::class_map;
                rle_expand(cells, [&](const std::string& tok) {
                    p.ids.push_back(int(std::strtol(tok.c_str(), nullptr, 10)));
                });
                require(p.ids.size() == h * w, ErrorCode::data,
                        "class map payload cell count mismatch");
            } else {
                p.kind = PayloadKind::dense_map;
                rle_expand(cells, [&](const std::string& tok) {
                    p.values.push_back(std::strtod(tok.c_str(), nullptr));
                });
                require(p.values.size() == h * w, ErrorCode::data,
                        "dense map payload cell count mismatch");
            }
            return p;
        }
        default: fail(ErrorCode::data, "unknown payload tag in: " + s);
    }
}

void PredictionLog::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), ErrorCode::io, "cannot open '" + path + "' for writing");
    f << "epoch,sample_id,group_id,task,pred,target\n";
    for (const auto& r : rows)
        f << r.epoch << ',' << r.sample_id << ',' << r.group_id << ',' << r.task << ',' << r.pred
          << ',' << r.target << '\n';
    require(f.good(), ErrorCode::io, "write failed for '" + path + "'");
}

PredictionLog PredictionLog::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), ErrorCode::io, "cannot open '" + path + "'");
    PredictionLog log;
    std::string line;
    require(bool(std::getline(f, line)), ErrorCode::io, "empty prediction log: " + path);
    require(line == "epoch,sample_id,group_id,task,pred,target", ErrorCode::data,
            "unexpected prediction log header in " + path);
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        auto parts = split(line, ',');
        require(parts.size() == 6, ErrorCode::data, "malformed prediction row: " + line);
        PredRow r;
        r.epoch = int(std::strtol(parts[0].c_str(), nullptr, 10));
        r.sample_id = std::strtoll(parts[1].c_str(), nullptr, 10);
        r.group_id = std::strtoll(parts[2].c_str(), nullptr, 10);
        r.task = parts[3];
        r.pred = parts[4];
        r.target = parts[5];
        log.rows.push_back(std::move(r));
    }
    return log;
}

} // namespace mtx
