#pragma once

#include <array>
#include <string>
#include <string_view>

#include "drumloop/consensus.hpp"

namespace drumloop::codec {

inline constexpr int kDefaultSequenceId = 319887;

// Online Sequencer drum-kit notes per role.
struct SequencerNoteMap {
  std::array<std::string, kTracks> notes = {"D4", "C3", "D5", "F#3"};  // snare, kick, other, hihat
  int sequence_id = kDefaultSequenceId;

  const std::string& note(Role role) const { return notes[static_cast<std::size_t>(role)]; }
  void set(Role role, std::string note);  // throws std::invalid_argument on a duplicate note
};

// Top-to-bottom row order of the text diagram and sequencer entries.
inline constexpr std::array<Role, kTracks> kDisplayOrder = {Role::Hihat, Role::OtherPercussion, Role::Kick,
                                                            Role::Snare};

// "Suggested tempo: <bpm>" then one tab-indented row per track, e.g.
//   \t|--X-X---X------X|X--X-----------X|
// Every line ends in '\n'.
std::string render_text(const ConsensusPattern& pattern);

// "Online Sequencer:<id>:<step> <note> 1 2;...:" with 0-based steps.
std::string render_sequencer(const ConsensusPattern& pattern, const SequencerNoteMap& map = {});

// Inverse of render_text. Throws ParseError with the 1-based line/column.
ConsensusPattern parse_text(std::string_view diagram);

}  // namespace drumloop::codec
