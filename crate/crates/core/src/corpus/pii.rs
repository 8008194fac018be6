//! Pattern-based PII replacement.
//!
//! Emails, IPv4 addresses and phone numbers are matched with regular
//! expressions; person names with a small first-name lexicon (optionally
//! followed by a capitalized surname). This is approximate by nature: it
//! misses unlisted names and will occasionally replace a capitalized word
//! that follows a listed first name.

use std::sync::OnceLock;

use regex::Regex;

pub const PERSON: &str = "PERSON";
pub const PHONE_NUMBER: &str = "PHONE_NUMBER";
pub const EMAIL_ADDRESS: &str = "EMAIL_ADDRESS";
pub const IP_ADDRESS: &str = "IP_ADDRESS";

const FIRST_NAMES: &[&str] = &[
    "Aaron", "Abigail", "Adam", "Adrian", "Aisha", "Alan", "Albert", "Alex", "Alexander", "Alice",
    "Alicia", "Allison", "Amanda", "Amber", "Amy", "Andrea", "Andrew", "Angela", "Anna", "Anne",
    "Anthony", "Arthur", "Ashley", "Barbara", "Benjamin", "Betty", "Beverly", "Brandon", "Brenda",
    "Brian", "Brittany", "Bruce", "Carl", "Carlos", "Carol", "Caroline", "Catherine", "Charles",
    "Charlotte", "Cheryl", "Chloe", "Christian", "Christina", "Christine", "Christopher", "Cynthia",
    "Daniel", "Danielle", "David", "Deborah", "Debra", "Denise", "Dennis", "Diana", "Diane",
    "Donald", "Donna", "Doris", "Dorothy", "Douglas", "Dylan", "Edward", "Elizabeth", "Emily",
    "Emma", "Eric", "Ethan", "Eugene", "Evelyn", "Frances", "Frank", "Gabriel", "Gary", "George",
    "Gerald", "Gloria", "Grace", "Gregory", "Hannah", "Harold", "Heather", "Helen", "Henry",
    "Isabella", "Jack", "Jacob", "Jacqueline", "James", "Janet", "Janice", "Jason", "Jean",
    "Jeffrey", "Jennifer", "Jeremy", "Jerry", "Jesse", "Jessica", "Joan", "Joe", "John", "Johnny",
    "Jonathan", "Jordan", "Jose", "Joseph", "Joshua", "Joyce", "Juan", "Judith", "Judy", "Julia",
    "Julie", "Justin", "Karen", "Katherine", "Kathleen", "Kathryn", "Kayla", "Keith", "Kelly",
    "Kenneth", "Kevin", "Kimberly", "Kyle", "Larry", "Laura", "Lauren", "Lawrence", "Linda",
    "Lisa", "Logan", "Louis", "Madison", "Margaret", "Maria", "Marie", "Marilyn", "Mark", "Martha",
    "Mary", "Matthew", "Megan", "Melissa", "Michael", "Michelle", "Mohammed", "Nancy", "Natalie",
    "Nathan", "Nicholas", "Nicole", "Noah", "Olivia", "Pamela", "Patricia", "Patrick", "Paul",
    "Peter", "Philip", "Rachel", "Ralph", "Randy", "Raymond", "Rebecca", "Richard", "Robert",
    "Roger", "Ronald", "Rose", "Roy", "Russell", "Ruth", "Ryan", "Samantha", "Samuel", "Sandra",
    "Sara", "Sarah", "Scott", "Sean", "Sharon", "Shirley", "Sophia", "Stephanie", "Stephen",
    "Steven", "Susan", "Teresa", "Terry", "Theresa", "Thomas", "Timothy", "Tyler", "Victoria",
    "Vincent", "Virginia", "Walter", "Wayne", "William", "Willie", "Zachary",
];

struct Patterns {
    email: Regex,
    ip: Regex,
    phone: Regex,
    person: Regex,
}

fn patterns() -> &'static Patterns {
    static PATTERNS: OnceLock<Patterns> = OnceLock::new();
    PATTERNS.get_or_init(|| {
        let octet = r"(?:25[0-5]|2[0-4][0-9]|1[0-9][0-9]|[1-9]?[0-9])";
        let person = format!(r"\b(?:{})(?:\s+[A-Z][a-z]+)?\b", FIRST_NAMES.join("|"));
        Patterns {
            email: Regex::new(r"[A-Za-z0-9._%+\-]+@[A-Za-z0-9\-]+(?:\.[A-Za-z0-9\-]+)*\.[A-Za-z]{2,}")
                .expect("email pattern"),
            ip: Regex::new(&format!(r"\b{octet}\.{octet}\.{octet}\.{octet}\b")).expect("ip pattern"),
            phone: Regex::new(
                r"(?:\+[0-9]{1,3}[ .\-]?)?(?:\([0-9]{3}\)[ ]?|\b[0-9]{3}[ .\-]?)[0-9]{3}[ .\-]?[0-9]{4}\b",
            )
            .expect("phone pattern"),
            person: Regex::new(&person).expect("person pattern"),
        }
    })
}

/// Replace person names, phone numbers, email and IP addresses with their
/// placeholder tokens. Everything else is left byte-identical.
pub fn scrub_pii(text: &str) -> String {
    let p = patterns();
    let out = p.email.replace_all(text, EMAIL_ADDRESS);
    let out = p.ip.replace_all(&out, IP_ADDRESS);
    let out = p.phone.replace_all(&out, PHONE_NUMBER);
    let out = p.person.replace_all(&out, PERSON);
    out.into_owned()
}
