//! Deterministic demo data: a multilingual dialogue corpus and sample
//! judgment/score files for the report renderer.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{DialogueRecord, LanguageCode, TaskKind, Turn};
use crate::metrics::{Judgment, Outcome, ScoreRow};

pub const DEMO_SEED: u64 = 0x7e1a_2025;
pub const DEMO_SIZE: usize = 50;

struct Phrasebook {
    lang: LanguageCode,
    doctor: &'static str,
    patient: &'static str,
    /// (doctor line, patient reply); the first pair opens every dialogue.
    exchanges: &'static [(&'static str, &'static str)],
    questions: &'static [&'static str],
}

const BOOKS: &[Phrasebook] = &[
    Phrasebook {
        lang: LanguageCode::En,
        doctor: "Doctor",
        patient: "Patient",
        exchanges: &[
            ("Good morning, what brings you in today?", "I have had a fever for three days."),
            ("Do you also have a cough?", "Yes, it gets worse at night."),
            ("Have you taken any medicine?", "I took paracetamol yesterday."),
            ("Any pain while swallowing?", "A little, mostly in the morning."),
            (
                "Drink plenty of fluids and rest. Dr. Rao will see you again on Monday.",
                "Okay, thank you.",
            ),
        ],
        questions: &["How long has the patient had a fever?", "Which medicine did the patient take?"],
    },
    Phrasebook {
        lang: LanguageCode::Hi,
        doctor: "डॉक्टर",
        patient: "मरीज़",
        exchanges: &[
            ("नमस्ते, आपको क्या तकलीफ़ है?", "मुझे तीन दिन से बुखार है।"),
            ("क्या आपको खांसी भी है?", "हाँ, रात में खांसी ज़्यादा होती है।"),
            ("कोई दवा ली है?", "मैंने पैरासिटामोल ली थी।"),
            ("क्या गले में दर्द है?", "थोड़ा सा, सुबह ज़्यादा होता है।"),
            ("खूब पानी पिएँ और आराम करें।", "ठीक है, धन्यवाद।"),
        ],
        questions: &["मरीज़ को कितने दिन से बुखार है?", "मरीज़ ने कौन सी दवा ली?"],
    },
    Phrasebook {
        lang: LanguageCode::Mr,
        doctor: "डॉक्टर",
        patient: "रुग्ण",
        exchanges: &[
            ("नमस्कार, तुम्हाला काय त्रास होत आहे?", "मला दोन दिवसांपासून डोकेदुखी आहे."),
            ("तुम्हाला ताप आहे का?", "हो, थोडा ताप आहे."),
            ("कोणते औषध घेतले?", "मी काल पॅरासिटामॉल घेतले."),
            ("भरपूर पाणी प्या आणि विश्रांती घ्या.", "ठीक आहे, धन्यवाद."),
        ],
        questions: &["रुग्णाला कधीपासून डोकेदुखी आहे?", "रुग्णाने कोणते औषध घेतले?"],
    },
    Phrasebook {
        lang: LanguageCode::Kn,
        doctor: "ವೈದ್ಯರು",
        patient: "ರೋಗಿ",
        exchanges: &[
            ("ನಮಸ್ಕಾರ, ನಿಮಗೆ ಏನು ತೊಂದರೆ?", "ನನಗೆ ಎರಡು ದಿನಗಳಿಂದ ಜ್ವರ ಇದೆ."),
            ("ಕೆಮ್ಮು ಇದೆಯೇ?", "ಹೌದು, ಸ್ವಲ್ಪ ಕೆಮ್ಮು ಇದೆ."),
            ("ಯಾವುದಾದರೂ ಔಷಧಿ ತೆಗೆದುಕೊಂಡಿದ್ದೀರಾ?", "ಇಲ್ಲ, ಇನ್ನೂ ಇಲ್ಲ."),
            ("ಸಾಕಷ್ಟು ನೀರು ಕುಡಿಯಿರಿ ಮತ್ತು ವಿಶ್ರಾಂತಿ ಪಡೆಯಿರಿ.", "ಸರಿ, ಧನ್ಯವಾದಗಳು."),
        ],
        questions: &["ರೋಗಿಗೆ ಎಷ್ಟು ದಿನಗಳಿಂದ ಜ್ವರ ಇದೆ?"],
    },
    Phrasebook {
        lang: LanguageCode::Gu,
        doctor: "ડૉક્ટર",
        patient: "દર્દી",
        exchanges: &[
            ("નમસ્તે, તમને શું તકલીફ છે?", "મને બે દિવસથી પેટમાં દુખાવો છે."),
            ("શું તમને ઉલટી થઈ છે?", "હા, ગઈકાલે એક વાર થઈ હતી."),
            ("તાવ છે?", "ના, તાવ નથી."),
            ("હળવો ખોરાક લો અને પાણી પીતા રહો.", "સારું, આભાર."),
        ],
        questions: &["દર્દીને કેટલા દિવસથી પેટમાં દુખાવો છે?", "શું દર્દીને તાવ છે?"],
    },
    Phrasebook {
        lang: LanguageCode::Te,
        doctor: "డాక్టర్",
        patient: "రోగి",
        exchanges: &[
            ("నమస్కారం, మీకు ఏమి సమస్య?", "నాకు మూడు రోజులుగా దగ్గు ఉంది."),
            ("జ్వరం కూడా ఉందా?", "అవును, రాత్రి జ్వరం వస్తుంది."),
            ("ఏదైనా మందు వేసుకున్నారా?", "లేదు, ఇంకా వేసుకోలేదు."),
            ("విశ్రాంతి తీసుకోండి, నీరు ఎక్కువగా తాగండి.", "సరే, ధన్యవాదాలు."),
        ],
        questions: &["రోగికి ఎన్ని రోజులుగా దగ్గు ఉంది?"],
    },
    Phrasebook {
        lang: LanguageCode::Ta,
        doctor: "மருத்துவர்",
        patient: "நோயாளி",
        exchanges: &[
            ("வணக்கம், உங்களுக்கு என்ன பிரச்சனை?", "எனக்கு இரண்டு நாட்களாக காய்ச்சல் இருக்கிறது."),
            ("இருமல் இருக்கிறதா?", "ஆமாம், இரவில் இருமல் அதிகம்."),
            ("ஏதாவது மருந்து எடுத்தீர்களா?", "நேற்று பாராசிட்டமால் எடுத்தேன்."),
            ("நிறைய தண்ணீர் குடித்து ஓய்வு எடுங்கள்.", "சரி, நன்றி."),
        ],
        questions: &["நோயாளிக்கு எத்தனை நாட்களாக காய்ச்சல் உள்ளது?", "நோயாளி என்ன மருந்து எடுத்தார்?"],
    },
    Phrasebook {
        lang: LanguageCode::Bn,
        doctor: "ডাক্তার",
        patient: "রোগী",
        exchanges: &[
            ("নমস্কার, আপনার কী সমস্যা?", "আমার তিন দিন ধরে জ্বর।"),
            ("কাশি আছে কি?", "হ্যাঁ, রাতে কাশি বাড়ে।"),
            ("কোনো ওষুধ খেয়েছেন?", "গতকাল প্যারাসিটামল খেয়েছি।"),
            ("প্রচুর জল খান এবং বিশ্রাম নিন।", "ঠিক আছে, ধন্যবাদ।"),
        ],
        questions: &["রোগীর কত দিন ধরে জ্বর?", "রোগী কোন ওষুধ খেয়েছেন?"],
    },
    Phrasebook {
        lang: LanguageCode::As,
        doctor: "চিকিৎসক",
        patient: "ৰোগী",
        exchanges: &[
            ("নমস্কাৰ, আপোনাৰ কি অসুবিধা হৈছে?", "মোৰ দুদিনৰ পৰা জ্বৰ হৈছে।"),
            ("কাহ আছে নেকি?", "হয়, ৰাতি কাহ বেছি হয়।"),
            ("কিবা ঔষধ খাইছেনে?", "নাই, এতিয়ালৈকে খোৱা নাই।"),
            ("বেছিকৈ পানী খাওক আৰু জিৰণি লওক।", "বাৰু, ধন্যবাদ।"),
        ],
        questions: &["ৰোগীৰ কিমান দিনৰ পৰা জ্বৰ হৈছে?"],
    },
];

const TASK_SETS: &[&[TaskKind]] = &[
    &[TaskKind::Qna, TaskKind::SummaryText, TaskKind::SummaryKnv],
    &[TaskKind::Qna],
    &[TaskKind::SummaryText],
    &[TaskKind::SummaryKnv],
    &[TaskKind::SummaryText, TaskKind::SummaryKnv],
];

/// Repetitions of the exchange list in the one long record, enough to exceed
/// the default translation budget.
const LONG_REPEATS: usize = 120;

fn book(lang: LanguageCode) -> &'static Phrasebook {
    BOOKS.iter().find(|b| b.lang == lang).expect("every language has a phrasebook")
}

fn record(index: usize, rng: &mut ChaCha8Rng, long: bool) -> DialogueRecord {
    let lang = LanguageCode::ALL[index % LanguageCode::ALL.len()];
    let book = book(lang);
    let mut exchanges: Vec<(&str, &str)> = book.exchanges.to_vec();
    exchanges[1..].shuffle(rng);
    let count = if long {
        exchanges.len() * LONG_REPEATS
    } else {
        rng.random_range(2..=exchanges.len())
    };
    let turns = exchanges
        .iter()
        .cycle()
        .take(count)
        .flat_map(|(d, p)| {
            [
                Turn {
                    speaker: book.doctor.to_string(),
                    utterance: d.to_string(),
                },
                Turn {
                    speaker: book.patient.to_string(),
                    utterance: p.to_string(),
                },
            ]
        })
        .collect();
    let tasks = TASK_SETS[(index / LanguageCode::ALL.len() + index) % TASK_SETS.len()].to_vec();
    let questions = if tasks.contains(&TaskKind::Qna) {
        let n = rng.random_range(1..=book.questions.len());
        book.questions[..n].iter().map(|q| q.to_string()).collect()
    } else {
        Vec::new()
    };
    DialogueRecord {
        id: format!("demo-{index:03}-{lang}"),
        lang,
        turns,
        tasks,
        questions,
    }
}

/// `n` records cycling through all languages. The last record is long
/// enough to be truncated under the default budget.
pub fn demo_corpus(seed: u64, n: usize) -> Vec<DialogueRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| record(i, &mut rng, n > 1 && i + 1 == n)).collect()
}

pub fn default_demo_corpus() -> Vec<DialogueRecord> {
    demo_corpus(DEMO_SEED, DEMO_SIZE)
}

/// Sample win counts out of 15 judgments per cell, in QnA, text, KnV order.
pub const SAMPLE_WIN_COUNTS: &[(LanguageCode, [usize; 3])] = &[
    (LanguageCode::Mr, [13, 9, 9]),
    (LanguageCode::Ta, [13, 9, 9]),
    (LanguageCode::Hi, [12, 10, 8]),
    (LanguageCode::As, [11, 6, 9]),
    (LanguageCode::Bn, [10, 6, 6]),
    (LanguageCode::Gu, [9, 11, 8]),
    (LanguageCode::Kn, [9, 10, 8]),
    (LanguageCode::En, [7, 7, 8]),
    (LanguageCode::Te, [2, 8, 10]),
];
pub const SAMPLE_JUDGMENTS_PER_CELL: usize = 15;

/// Sample per-cell (F1, embedding F1) values, in QnA, text, KnV order.
pub const SAMPLE_SCORES: &[(LanguageCode, [(f64, f64); 3])] = &[
    (LanguageCode::En, [(0.668, 0.850), (0.900, 0.839), (0.427, 0.908)]),
    (LanguageCode::Hi, [(0.617, 0.866), (0.922, 0.838), (0.400, 0.904)]),
    (LanguageCode::Mr, [(0.598, 0.850), (0.815, 0.811), (0.390, 0.911)]),
    (LanguageCode::Ta, [(0.564, 0.846), (0.911, 0.839), (0.379, 0.914)]),
    (LanguageCode::Te, [(0.565, 0.851), (0.893, 0.834), (0.364, 0.911)]),
    (LanguageCode::Kn, [(0.558, 0.849), (0.879, 0.828), (0.372, 0.915)]),
    (LanguageCode::Gu, [(0.529, 0.849), (0.895, 0.835), (0.359, 0.913)]),
    (LanguageCode::Bn, [(0.480, 0.829), (0.852, 0.818), (0.346, 0.903)]),
    (LanguageCode::As, [(0.428, 0.824), (0.879, 0.830), (0.383, 0.915)]),
];

pub fn sample_judgments() -> Vec<Judgment> {
    let mut out = Vec::new();
    for (lang, wins) in SAMPLE_WIN_COUNTS {
        for (task, &w) in TaskKind::ALL.iter().zip(wins) {
            for i in 0..SAMPLE_JUDGMENTS_PER_CELL {
                out.push(Judgment {
                    record_id: format!("{lang}-{task}-{i:02}"),
                    language: *lang,
                    task: *task,
                    outcome: if i < w { Outcome::Win } else { Outcome::Loss },
                });
            }
        }
    }
    out
}

pub fn sample_scores() -> Vec<ScoreRow> {
    SAMPLE_SCORES
        .iter()
        .flat_map(|(lang, cells)| {
            TaskKind::ALL.iter().zip(cells).map(|(task, (f1, bert))| ScoreRow {
                language: *lang,
                task: *task,
                f1: *f1,
                bert_f: Some(*bert),
            })
        })
        .collect()
}

/// Serializes items as JSON lines.
pub fn to_jsonl<T: serde::Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|i| serde_json::to_string(i).expect("plain data serializes") + "\n")
        .collect()
}
