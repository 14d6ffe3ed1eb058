#include "skyseg/core/frame.hpp"

#include <charconv>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include "skyseg/core/error.hpp"

namespace skyseg {

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path.string() + ": cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out << text;
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t k = 0;
    while (k < line.size()) {
        while (k < line.size() && (line[k] == ' ' || line[k] == '\t' || line[k] == '\r')) ++k;
        std::size_t start = k;
        while (k < line.size() && line[k] != ' ' && line[k] != '\t' && line[k] != '\r') ++k;
        if (k > start) out.push_back(line.substr(start, k - start));
    }
    return out;
}

template <class T>
bool parse_number(std::string_view tok, T& value) {
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    return ec == std::errc{} && ptr == tok.data() + tok.size();
}

struct RawGrid {
    int rows = 0;
    int cols = 0;
    std::vector<std::string_view> header_extra;
    std::vector<std::int64_t> cells;
};

RawGrid parse_grid(std::string_view text, std::string_view source) {
    RawGrid g;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    bool have_header = false;
    auto fail = [&](const std::string& what) {
        throw ParseError(std::string(source) + ": line " + std::to_string(line_no) + ": " + what);
    };
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        auto toks = split_ws(line);
        if (toks.empty()) continue;
        if (!have_header) {
            if (toks.size() != 2 && toks.size() != 5)
                fail("malformed header, expected \"rows cols [timestamp elevation azimuth]\"");
            if (!parse_number(toks[0], g.rows) || !parse_number(toks[1], g.cols) || g.rows <= 0 ||
                g.cols <= 0)
                fail("malformed header, rows and cols must be positive integers");
            g.header_extra.assign(toks.begin() + 2, toks.end());
            g.cells.reserve(static_cast<std::size_t>(g.rows) * g.cols);
            have_header = true;
            continue;
        }
        for (auto tok : toks) {
            std::int64_t v = 0;
            if (!parse_number(tok, v)) fail("non-numeric cell \"" + std::string(tok) + "\"");
            g.cells.push_back(v);
        }
    }
    if (!have_header) {
        line_no = 1;
        fail("missing header");
    }
    const std::size_t expected = static_cast<std::size_t>(g.rows) * g.cols;
    if (g.cells.size() != expected) {
        line_no = line_no > 0 ? line_no - 1 : 0;
        fail("expected " + std::to_string(expected) + " cells, found " + std::to_string(g.cells.size()));
    }
    return g;
}

template <class T>
std::string format_grid(const Grid<T>& g, const std::string& header) {
    std::string out = header;
    out += '\n';
    for (int i = 0; i < g.rows(); ++i) {
        for (int j = 0; j < g.cols(); ++j) {
            if (j) out += ' ';
            out += std::to_string(g(i, j));
        }
        out += '\n';
    }
    return out;
}

std::string format_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace

Timestamp parse_iso8601(std::string_view text) {
    std::tm tm{};
    std::string s(text);
    if (!s.empty() && (s.back() == 'Z' || s.back() == 'z')) s.pop_back();
    std::istringstream in(s);
    in >> std::get_time(&tm, "%Y-%m-%dT%H:%M:%S");
    if (in.fail() || in.peek() != std::char_traits<char>::eof())
        throw ParseError("invalid ISO-8601 timestamp \"" + std::string(text) + "\"");
    return static_cast<Timestamp>(timegm(&tm));
}

std::string format_iso8601(Timestamp t) {
    std::time_t tt = static_cast<std::time_t>(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

KelvinGrid IRFrame::kelvin() const {
    return map_grid(centi_kelvin, [](std::int32_t c) { return static_cast<double>(c) / 100.0; });
}

IRFrame IRFrame::from_kelvin(const KelvinGrid& k) {
    IRFrame f;
    f.centi_kelvin = map_grid(k, [](double v) {
        return static_cast<std::int32_t>(std::lround(std::max(v, 0.01) * 100.0));
    });
    return f;
}

IRFrame parse_frame(std::string_view text, std::string_view source) {
    RawGrid raw = parse_grid(text, source);
    IRFrame f;
    f.centi_kelvin = Grid<std::int32_t>(raw.rows, raw.cols);
    for (std::size_t k = 0; k < raw.cells.size(); ++k) {
        if (raw.cells[k] <= 0 || raw.cells[k] > INT32_MAX)
            throw ParseError(std::string(source) + ": cell " + std::to_string(k) +
                             " is not a positive centi-Kelvin temperature");
        f.centi_kelvin[k] = static_cast<std::int32_t>(raw.cells[k]);
    }
    if (raw.header_extra.size() == 3) {
        f.timestamp = parse_iso8601(raw.header_extra[0]);
        if (!parse_number(raw.header_extra[1], f.sun_elevation) ||
            !parse_number(raw.header_extra[2], f.sun_azimuth))
            throw ParseError(std::string(source) + ": line 1: malformed sun angles");
    }
    return f;
}

IRFrame load_frame(const std::filesystem::path& path) {
    return parse_frame(read_file(path), path.string());
}

std::string format_frame(const IRFrame& frame) {
    std::string header = std::to_string(frame.rows()) + " " + std::to_string(frame.cols());
    if (frame.timestamp) {
        header += " " + format_iso8601(*frame.timestamp) + " " + format_number(frame.sun_elevation) +
                  " " + format_number(frame.sun_azimuth);
    }
    return format_grid(frame.centi_kelvin, header);
}

void save_frame(const std::filesystem::path& path, const IRFrame& frame) {
    write_file(path, format_frame(frame));
}

LabelMask parse_label(std::string_view text, std::string_view source) {
    RawGrid raw = parse_grid(text, source);
    LabelMask m(raw.rows, raw.cols);
    for (std::size_t k = 0; k < raw.cells.size(); ++k) {
        if (raw.cells[k] != 0 && raw.cells[k] != 1)
            throw ParseError(std::string(source) + ": label cell " + std::to_string(k) +
                             " is not 0 or 1");
        m[k] = static_cast<std::uint8_t>(raw.cells[k]);
    }
    return m;
}

LabelMask load_label(const std::filesystem::path& path) {
    return parse_label(read_file(path), path.string());
}

std::string format_label(const LabelMask& mask) {
    return format_grid(map_grid(mask, [](std::uint8_t v) { return static_cast<int>(v); }),
                       std::to_string(mask.rows()) + " " + std::to_string(mask.cols()));
}

void save_label(const std::filesystem::path& path, const LabelMask& mask) {
    write_file(path, format_label(mask));
}

void save_channel(const std::filesystem::path& path, const KelvinGrid& grid) {
    std::string out = std::to_string(grid.rows()) + " " + std::to_string(grid.cols()) + "\n";
    for (int i = 0; i < grid.rows(); ++i) {
        for (int j = 0; j < grid.cols(); ++j) {
            if (j) out += ' ';
            out += format_number(grid(i, j));
        }
        out += '\n';
    }
    write_file(path, out);
}

}  // namespace skyseg
