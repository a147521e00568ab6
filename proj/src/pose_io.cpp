#include "skatepose/pose_io.hpp"

#include "skatepose/error.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace skatepose {

using nlohmann::json;

PoseFormat parse_pose_format(std::string_view name) {
    if (name == "jsonl") return PoseFormat::Jsonl;
    if (name == "csv") return PoseFormat::Csv;
    fail(ErrorKind::Usage, "unknown pose format '" + std::string(name) + "' (expected jsonl or csv)");
}

PoseFormat pose_format_for(const std::filesystem::path& path) {
    return path.extension() == ".csv" ? PoseFormat::Csv : PoseFormat::Jsonl;
}

namespace {

[[noreturn]] void parse_error(std::size_t line, const std::string& msg) {
    fail(ErrorKind::Parse, "line " + std::to_string(line) + ": " + msg);
}

void check_finite(double v, std::size_t line) {
    if (!std::isfinite(v)) fail(ErrorKind::Validation, "line " + std::to_string(line) + ": non-finite coordinate");
}

PoseSequence3D sequence_from_json(const json& j, std::size_t line) {
    PoseSequence3D seq;
    try {
        seq.subject = j.at("subject").get<std::string>();
        seq.trial = j.at("trial").get<std::string>();
        seq.fps = j.at("fps").get<double>();
        seq.skeleton = find_skeleton(j.at("skeleton").get<std::string>());
        const auto& frames = j.at("frames");
        if (!frames.is_array()) parse_error(line, "'frames' must be an array");
        const auto n = static_cast<Eigen::Index>(seq.skeleton->joint_count());
        for (const auto& f : frames) {
            if (!f.is_array() || static_cast<Eigen::Index>(f.size()) != n) {
                parse_error(line, "each frame must hold " + std::to_string(n) + " joints");
            }
            Frame3 frame(n, 3);
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto& p = f[static_cast<std::size_t>(i)];
                if (!p.is_array() || p.size() != 3) parse_error(line, "each joint must be [x, y, z]");
                for (int k = 0; k < 3; ++k) {
                    if (!p[static_cast<std::size_t>(k)].is_number()) {
                        fail(ErrorKind::Validation, "line " + std::to_string(line) + ": non-finite coordinate");
                    }
                    frame(i, k) = p[static_cast<std::size_t>(k)].get<double>();
                    check_finite(frame(i, k), line);
                }
            }
            seq.frames.push_back(std::move(frame));
        }
    } catch (const json::exception& e) {
        parse_error(line, e.what());
    }
    try {
        seq.validate();
    } catch (const Error& e) {
        fail(e.kind(), "line " + std::to_string(line) + ": " + e.what());
    }
    return seq;
}

json sequence_to_json(const PoseSequence3D& seq) {
    json frames = json::array();
    for (const auto& f : seq.frames) {
        json jf = json::array();
        for (Eigen::Index i = 0; i < f.rows(); ++i) jf.push_back({f(i, 0), f(i, 1), f(i, 2)});
        frames.push_back(std::move(jf));
    }
    return json{{"subject", seq.subject}, {"trial", seq.trial}, {"fps", seq.fps}, {"skeleton", seq.skeleton->name},
                {"frames", std::move(frames)}};
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& s, std::size_t line) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) {
        if (s == "nan" || s == "inf" || s == "-inf" || s == "NaN") fail(ErrorKind::Validation, "line " + std::to_string(line) + ": non-finite coordinate");
        parse_error(line, "malformed number '" + s + "'");
    }
    return v;
}

long parse_int(const std::string& s, std::size_t line) {
    long v = 0;
    const auto* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) parse_error(line, "malformed integer '" + s + "'");
    return v;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::vector<PoseSequence3D> read_csv(std::istream& in) {
    std::vector<PoseSequence3D> out;
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    std::size_t start_line = 0;
    std::vector<std::vector<double>> coords;  // per row x,y,z
    PoseSequence3D cur;
    long expect_frame = 0;
    long expect_joint = 0;

    const auto flush = [&]() {
        if (!cur.skeleton) return;
        const auto n = static_cast<long>(cur.skeleton->joint_count());
        if (expect_joint != 0) parse_error(line_no, "sequence ends mid-frame");
        (void)n;
        try {
            cur.validate();
        } catch (const Error& e) {
            fail(e.kind(), "line " + std::to_string(start_line) + ": " + e.what());
        }
        out.push_back(std::move(cur));
        cur = PoseSequence3D{};
    };

    Frame3 frame;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv(line);
        if (!header) {
            const std::vector<std::string> expected{"subject", "trial", "fps", "skeleton", "frame", "joint", "x", "y", "z"};
            if (cells != expected) parse_error(line_no, "expected header subject,trial,fps,skeleton,frame,joint,x,y,z");
            header = true;
            continue;
        }
        if (cells.size() != 9) parse_error(line_no, "expected 9 columns, found " + std::to_string(cells.size()));
        const long fidx = parse_int(cells[4], line_no);
        const long jidx = parse_int(cells[5], line_no);
        const bool new_seq = !cur.skeleton || cells[0] != cur.subject || cells[1] != cur.trial ||
                             (fidx == 0 && jidx == 0 && expect_frame > 0 && expect_joint == 0);
        if (new_seq) {
            flush();
            cur.subject = cells[0];
            cur.trial = cells[1];
            cur.fps = parse_double(cells[2], line_no);
            cur.skeleton = find_skeleton(cells[3]);
            expect_frame = 0;
            expect_joint = 0;
            start_line = line_no;
        }
        const auto n = static_cast<long>(cur.skeleton->joint_count());
        if (fidx != expect_frame || jidx != expect_joint) {
            parse_error(line_no, "expected frame " + std::to_string(expect_frame) + " joint " + std::to_string(expect_joint));
        }
        if (jidx == 0) frame = Frame3(n, 3);
        for (int k = 0; k < 3; ++k) {
            frame(jidx, k) = parse_double(cells[6 + static_cast<std::size_t>(k)], line_no);
            check_finite(frame(jidx, k), line_no);
        }
        if (++expect_joint == n) {
            cur.frames.push_back(frame);
            expect_joint = 0;
            ++expect_frame;
        }
    }
    flush();
    return out;
}

}  // namespace

std::vector<PoseSequence3D> read_pose_dataset(std::istream& in, PoseFormat format) {
    if (format == PoseFormat::Csv) return read_csv(in);
    std::vector<PoseSequence3D> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            parse_error(line_no, e.what());
        }
        if (!j.is_object()) parse_error(line_no, "expected a JSON object");
        out.push_back(sequence_from_json(j, line_no));
    }
    return out;
}

void write_pose_dataset(std::ostream& out, const std::vector<PoseSequence3D>& seqs, PoseFormat format) {
    if (format == PoseFormat::Jsonl) {
        for (const auto& s : seqs) out << sequence_to_json(s).dump() << '\n';
        return;
    }
    out << "subject,trial,fps,skeleton,frame,joint,x,y,z\n";
    for (const auto& s : seqs) {
        for (std::size_t t = 0; t < s.frames.size(); ++t) {
            for (Eigen::Index i = 0; i < s.frames[t].rows(); ++i) {
                out << s.subject << ',' << s.trial << ',' << format_double(s.fps) << ',' << s.skeleton->name << ','
                    << t << ',' << i << ',' << format_double(s.frames[t](i, 0)) << ','
                    << format_double(s.frames[t](i, 1)) << ',' << format_double(s.frames[t](i, 2)) << '\n';
            }
        }
    }
}

std::vector<PoseSequence3D> load_pose_dataset(const std::filesystem::path& path, PoseFormat format) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open pose dataset '" + path.string() + "'");
    return read_pose_dataset(in, format);
}

void save_pose_dataset(const std::filesystem::path& path, const std::vector<PoseSequence3D>& seqs, PoseFormat format) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot write pose dataset '" + path.string() + "'");
    write_pose_dataset(out, seqs, format);
}

}  // namespace skatepose
