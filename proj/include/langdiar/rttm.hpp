#pragma once

#include <algorithm>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "langdiar/timeline.hpp"

// RTTM line format, bit-exact:
//   SPEAKER <file-id> 1 <tbeg:%.3f> <tdur:%.3f> <NA> <NA> <name> <NA> <NA>
//   LANGUAGE <file-id> 1 <tbeg:%.3f> <tdur:%.3f> <NA> <NA> <lang-id> <NA> <NA>
// Speech/non-speech timelines are written as SPEAKER lines with the fixed
// pseudo-speaker name `speech`.

namespace langdiar {

inline const char* rttm_type(LabelKind kind) {
    return kind == LabelKind::speaker ? "SPEAKER" : "LANGUAGE";
}

inline void write_rttm_line(std::ostream& os, const char* type, const std::string& file_id,
                            double tbeg, double tdur, const std::string& name) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f %.3f", tbeg, tdur);
    os << type << ' ' << file_id << " 1 " << buf << " <NA> <NA> " << name << " <NA> <NA>\n";
}

inline void write_rttm(std::ostream& os, const LabeledAnnotation& ann) {
    for (const AnnEntry& e : ann.entries)
        write_rttm_line(os, rttm_type(ann.space.kind), ann.file_id, e.seg.start,
                        e.seg.duration(), ann.space.name_of(e.label));
}

inline void write_rttm_speech(std::ostream& os, const Timeline& speech,
                              const std::string& file_id) {
    for (const Segment& s : speech.segments)
        write_rttm_line(os, "SPEAKER", file_id, s.start, s.duration(), "speech");
}

// Parses lines of the requested type into one annotation per file id. Label
// spaces are built per file from the sorted set of names seen, so ids are
// independent of line order.
inline std::map<std::string, LabeledAnnotation> read_rttm(std::istream& is, LabelKind kind) {
    struct RawEntry { Segment seg; std::string name; };
    std::map<std::string, std::vector<RawEntry>> raw;
    const std::string want = rttm_type(kind);
    std::string line;
    long line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        std::istringstream ls(line);
        std::string type, file_id, chan, na1, na2, name;
        double tbeg = 0.0, tdur = 0.0;
        if (!(ls >> type)) continue;
        if (type != want) continue;
        if (!(ls >> file_id >> chan >> tbeg >> tdur >> na1 >> na2 >> name))
            throw DataError("malformed RTTM line " + std::to_string(line_no) + ": " + line);
        if (!(tdur > 0.0))
            throw DataError("non-positive duration on RTTM line " + std::to_string(line_no));
        raw[file_id].push_back({{tbeg, tbeg + tdur}, name});
    }

    std::map<std::string, LabeledAnnotation> out;
    for (auto& [file_id, entries] : raw) {
        LabeledAnnotation ann;
        ann.file_id = file_id;
        ann.space.kind = kind;
        std::vector<std::string> names;
        for (const auto& e : entries) names.push_back(e.name);
        std::sort(names.begin(), names.end());
        names.erase(std::unique(names.begin(), names.end()), names.end());
        ann.space.names = std::move(names);
        for (const auto& e : entries)
            ann.entries.push_back({e.seg, ann.space.id_of(e.name)});
        ann.sort_entries();
        out[file_id] = std::move(ann);
    }
    return out;
}

} // namespace langdiar
