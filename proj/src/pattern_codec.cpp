#include "drumloop/pattern_codec.hpp"

#include <charconv>
#include <stdexcept>
#include <vector>

#include "drumloop/errors.hpp"

namespace drumloop::codec {
namespace {

constexpr std::string_view kTempoPrefix = "Suggested tempo: ";

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
  return lines;
}

}  // namespace

void SequencerNoteMap::set(Role role, std::string note) {
  for (Role other : kRoleOrder) {
    if (other != role && this->note(other) == note) {
      throw std::invalid_argument("note " + note + " is already mapped to " + std::string(role_name(other)));
    }
  }
  notes[static_cast<std::size_t>(role)] = std::move(note);
}

std::string render_text(const ConsensusPattern& pattern) {
  std::string out(kTempoPrefix);
  out += std::to_string(pattern.tempo_bpm);
  out += '\n';
  for (Role role : kDisplayOrder) {
    out += '\t';
    for (int s = 0; s < kPatternSteps; ++s) {
      if (s % kStepsPerBar == 0) out += '|';
      out += pattern.track(role).test(static_cast<std::size_t>(s)) ? 'X' : '-';
    }
    out += "|\n";
  }
  return out;
}

std::string render_sequencer(const ConsensusPattern& pattern, const SequencerNoteMap& map) {
  std::string out = "Online Sequencer:" + std::to_string(map.sequence_id) + ":";
  for (Role role : kDisplayOrder) {
    for (int s = 0; s < kPatternSteps; ++s) {
      if (!pattern.track(role).test(static_cast<std::size_t>(s))) continue;
      out += std::to_string(s);
      out += ' ';
      out += map.note(role);
      out += " 1 2;";
    }
  }
  out += ':';
  return out;
}

ConsensusPattern parse_text(std::string_view diagram) {
  std::vector<std::string_view> lines = split_lines(diagram);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.size() != 1 + kTracks) {
    throw ParseError("expected a tempo line and " + std::to_string(kTracks) + " rows, got " +
                     std::to_string(lines.size()) + " lines");
  }

  ConsensusPattern pattern;
  const std::string_view tempo_line = lines[0];
  if (!tempo_line.starts_with(kTempoPrefix)) throw ParseError("missing 'Suggested tempo: ' line", 1, 1);
  const std::string_view number = tempo_line.substr(kTempoPrefix.size());
  const auto [ptr, ec] = std::from_chars(number.data(), number.data() + number.size(), pattern.tempo_bpm);
  if (ec != std::errc() || ptr != number.data() + number.size() || number.empty()) {
    throw ParseError("tempo is not an integer", 1, static_cast<int>(kTempoPrefix.size()) + 1);
  }

  for (std::size_t r = 0; r < kTracks; ++r) {
    const int line_no = static_cast<int>(r) + 2;
    std::string_view row = lines[r + 1];
    int column = 1;
    if (!row.empty() && row.front() == '\t') {
      row.remove_prefix(1);
      ++column;
    }
    auto& bits = pattern.track(kDisplayOrder[r]);
    std::size_t pos = 0;
    for (int bar = 0; bar < 2; ++bar) {
      if (pos >= row.size() || row[pos] != '|') {
        throw ParseError("expected '|' at start of bar " + std::to_string(bar + 1), line_no, column + static_cast<int>(pos));
      }
      ++pos;
      for (int s = 0; s < kStepsPerBar; ++s, ++pos) {
        const int col = column + static_cast<int>(pos);
        if (pos >= row.size()) throw ParseError("bar " + std::to_string(bar + 1) + " is shorter than 16 steps", line_no, col);
        const char c = row[pos];
        if (c == '|') throw ParseError("bar " + std::to_string(bar + 1) + " is shorter than 16 steps", line_no, col);
        if (c != 'X' && c != '-') throw ParseError(std::string("unknown character '") + c + "'", line_no, col);
        bits.set(static_cast<std::size_t>(bar * kStepsPerBar + s), c == 'X');
      }
    }
    if (pos >= row.size() || row[pos] != '|') {
      throw ParseError("expected closing '|' after 32 steps", line_no, column + static_cast<int>(pos));
    }
    if (pos + 1 != row.size()) throw ParseError("trailing characters after closing '|'", line_no, column + static_cast<int>(pos) + 1);
  }
  return pattern;
}

}  // namespace drumloop::codec
